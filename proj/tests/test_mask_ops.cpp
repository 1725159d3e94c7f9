#include <doctest.h>

#include <map>

#include "support.hpp"
#include "voxprompt/error.hpp"
#include "voxprompt/mask_ops.hpp"
#include "voxprompt/rle.hpp"

using namespace voxprompt;

TEST_CASE("erode") {
  CHECK(erode(vt::square(9, 9, 3, 3, 3), 1) == vt::square(9, 9, 4, 4, 1));
  CHECK(erode(vt::square(11, 11, 3, 3, 5), 2) == vt::square(11, 11, 5, 5, 1));
  const auto m = vt::random_mask(12, 12, 0.4, 1);
  CHECK(erode(m, 0) == m);
  // Border pixels count as background.
  Mask2D full(4, 4);
  for (auto& b : full.bits()) b = 1;
  CHECK(erode(full, 1) == vt::square(4, 4, 1, 1, 2));
}

TEST_CASE("dilate") {
  CHECK(dilate(vt::square(9, 9, 4, 4, 1), 1) == vt::square(9, 9, 3, 3, 3));
  CHECK(dilate(Mask2D(5, 5), 2).empty());
  const auto sq = vt::square(16, 16, 4, 5, 7);
  CHECK(dilate(erode(sq, 2), 2) == sq);
}

TEST_CASE("set algebra and shape checks") {
  const auto a = vt::random_mask(8, 8, 0.5, 2), b = vt::random_mask(8, 8, 0.5, 3);
  CHECK(mask_or(mask_and(a, b), mask_and_not(a, b)) == a);
  CHECK(mask_and(a, mask_not(a)).empty());
  CHECK_THROWS_AS(mask_and(a, Mask2D(8, 9)), ShapeError);
}

TEST_CASE("bbox_of") {
  Mask2D m(10, 10);
  CHECK_FALSE(bbox_of(m).has_value());
  m.set(2, 3);
  m.set(5, 7);
  const auto b = bbox_of(m);
  REQUIRE(b);
  CHECK(*b == Box{2, 3, 5, 7});
  for (auto& v : m.bits()) v = 1;
  CHECK(*bbox_of(m) == Box{0, 0, 9, 9});
}

TEST_CASE("apply_affine") {
  const auto m = vt::square(20, 20, 6, 6, 5);
  CHECK(random_affine(m, AffineRanges::identity(), 9) == m);

  AffineParams p;
  p.translate_cols = 3;
  CHECK(apply_affine(m, p) == vt::square(20, 20, 6, 9, 5));

  // Shifted past the right edge, the overflow is dropped.
  const auto edge = vt::square(20, 20, 6, 14, 5);
  Mask2D want(20, 20);
  for (int r = 6; r < 11; ++r)
    for (int c = 17; c < 20; ++c) want.set(r, c);
  CHECK(apply_affine(edge, p) == want);

  const auto r = vt::random_mask(20, 20, 0.3, 4);
  CHECK(random_affine(r, AffineRanges{}, 77) == random_affine(r, AffineRanges{}, 77));
}

TEST_CASE("error_mask") {
  const auto g = vt::square(10, 10, 2, 2, 4);
  auto e = error_mask(g, g);
  CHECK(e.false_negatives.empty());
  CHECK(e.false_positives.empty());

  e = error_mask(Mask2D(10, 10), g);
  CHECK(e.false_negatives == g);
  CHECK(e.false_positives.empty());

  const auto big = vt::square(10, 10, 1, 1, 6);
  e = error_mask(big, g);
  CHECK(e.false_negatives.empty());
  CHECK(e.false_positives == mask_and_not(big, g));
  CHECK_THROWS_AS(error_mask(g, Mask2D(9, 10)), ShapeError);
}

TEST_CASE("dice on masks") {
  Mask2D a(4, 4), b(4, 4);
  CHECK(dice(a, b) == 1.0);
  for (int i = 0; i < 8; ++i) a.bits()[i] = 1;
  for (int i = 4; i < 12; ++i) b.bits()[i] = 1;
  CHECK(dice(a, b) == doctest::Approx(0.5));
}

TEST_CASE("sample_uniform") {
  CHECK_FALSE(sample_uniform(Mask2D(3, 3), 1).has_value());
  CHECK(*sample_uniform(vt::square(5, 5, 2, 3, 1), 1) == Point{2, 3});

  const auto m = vt::square(6, 6, 1, 1, 2);
  std::map<std::pair<int, int>, int> freq;
  const int n = 100000;
  for (int s = 0; s < n; ++s) {
    const auto p = *sample_uniform(m, static_cast<std::uint64_t>(s));
    ++freq[{p.row, p.col}];
  }
  CHECK(freq.size() == 4);
  for (const auto& [k, c] : freq) CHECK(std::abs(c / double(n) - 0.25) <= 0.01);
}

TEST_CASE("resample_nearest keeps block structure") {
  const auto m = vt::square(64, 64, 16, 16, 16);
  const auto low = resample_nearest(m, 16, 16);
  CHECK(low == vt::square(16, 16, 4, 4, 4));
  CHECK(resample_nearest(low, 64, 64) == m);
}

TEST_CASE("rle") {
  Mask2D m(3, 4);
  m.set(0, 1);
  m.set(0, 2);
  m.set(1, 3);
  m.set(2, 0);
  const Runs want{{1, 2}, {7, 2}};
  CHECK(rle_encode(m) == want);
  CHECK(rle_decode(want, 3, 4) == m);
  CHECK(rle_encode(Mask2D(2, 2)).empty());

  CHECK_THROWS_AS(rle_decode({{10, 5}}, 3, 4), FormatError);
  CHECK_THROWS_AS(rle_decode({{3, 2}, {1, 1}}, 3, 4), FormatError);
  CHECK_THROWS_AS(rle_decode({{0, 2}, {1, 1}}, 3, 4), FormatError);
  CHECK_THROWS_AS(rle_decode({{0, 0}}, 3, 4), FormatError);

  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto r = vt::random_mask(17, 23, 0.1 + 0.015 * s, s);
    CHECK(rle_decode(rle_encode(r), 17, 23) == r);
  }
}

#include <doctest.h>

#include "support.hpp"
#include "voxprompt/prompts.hpp"

using namespace voxprompt;

namespace {

Mask2D disk(int n, double cy, double cx, double r) {
  Mask2D m(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.set(y, x);
  return m;
}

double iou(const Mask2D& a, const Mask2D& b) {
  const auto i = mask_and(a, b).count();
  const auto u = mask_or(a, b).count();
  return u == 0 ? 1.0 : static_cast<double>(i) / static_cast<double>(u);
}

}  // namespace

TEST_CASE("gen_point") {
  // Only the centre survives erosion by the contour margin.
  const auto sq = vt::square(20, 20, 5, 5, 5);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = gen_point(sq, s);
    CHECK(p.positive);
    CHECK(p.position == Point{7, 7});
  }
  CHECK(gen_point(vt::square(9, 9, 4, 6, 1), 3).position == Point{4, 6});
  CHECK_THROWS(gen_point(Mask2D(4, 4), 0));

  const auto d = disk(64, 30, 34, 11);
  const auto inner = erode(d, kPointContourMargin);
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto p = gen_point(d, s).position;
    CHECK(inner(p.row, p.col));
  }
}

TEST_CASE("gen_box") {
  CHECK(perturb_box({10, 10, 20, 20}, {0, 0, 0, 0}, 64, 64) == Box{10, 10, 20, 20});
  CHECK(perturb_box({10, 10, 20, 20}, {20, 20, 20, 20}, 64, 64) == Box{0, 0, 40, 40});
  // Crossed sides collapse to their midpoint.
  CHECK(perturb_box({10, 10, 11, 20}, {-5, 0, -5, 0}, 64, 64) == Box{10, 10, 10, 20});
  CHECK_THROWS(gen_box(Mask2D(4, 4), 0));

  bool lo = false, hi = false;
  for (std::uint64_t s = 0; s < 20000; ++s) {
    for (int v : sample_box_deltas(s)) {
      CHECK(v >= kBoxDeltaMin);
      CHECK(v <= kBoxDeltaMax);
      lo |= v == kBoxDeltaMin;
      hi |= v == kBoxDeltaMax;
    }
  }
  CHECK(lo);
  CHECK(hi);
}

TEST_CASE("gen_noisy_mask") {
  const auto d = disk(64, 31.5, 31.5, 14);
  const auto low = resample_nearest(d, 16, 16);
  CHECK(gen_noisy_mask(d, 5, 16, AffineRanges::identity()) == low);
  CHECK_THROWS(gen_noisy_mask(Mask2D(8, 8), 0, 4));

  double sum = 0;
  const int n = 1000;
  for (int s = 0; s < n; ++s) {
    const auto m = gen_noisy_mask(d, static_cast<std::uint64_t>(s), 16);
    CHECK(m.height() == 16);
    for (auto b : m.bits()) CHECK(b <= 1);
    sum += iou(m, low);
  }
  CHECK(sum / n >= 0.5);
}

TEST_CASE("gen_correction_point") {
  const auto g = vt::square(20, 20, 4, 4, 8);
  const auto fn = gen_correction_point(Mask2D(20, 20), g, 1);
  REQUIRE(fn);
  CHECK(fn->positive);
  CHECK(g(fn->position.row, fn->position.col));

  const auto big = vt::square(20, 20, 2, 2, 12);
  const auto fp = gen_correction_point(big, g, 1);
  REQUIRE(fp);
  CHECK_FALSE(fp->positive);
  CHECK(big(fp->position.row, fp->position.col));
  CHECK_FALSE(g(fp->position.row, fp->position.col));

  CHECK_FALSE(gen_correction_point(g, g, 1).has_value());

  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto pred = vt::random_mask(16, 16, 0.3, s), gt = vt::random_mask(16, 16, 0.3, s + 999);
    const auto e = error_mask(pred, gt);
    const auto p = gen_correction_point(pred, gt, s);
    REQUIRE(p);
    const bool in_fn = e.false_negatives(p->position.row, p->position.col);
    const bool in_fp = e.false_positives(p->position.row, p->position.col);
    CHECK(in_fn != in_fp);
    CHECK(p->positive == in_fn);
  }
}

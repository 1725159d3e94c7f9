#include "voxprompt/prompts.hpp"

#include <algorithm>
#include <stdexcept>

#include "voxprompt/rng.hpp"

namespace voxprompt {

PointPrompt gen_point(const Mask2D& gt, std::uint64_t seed) {
  if (gt.empty()) throw std::invalid_argument("gen_point: empty ground truth");
  const std::uint64_t s = derive_seed(seed, {tag(Stream::point)});
  // Thin structures have no interior after erosion; fall back to the mask.
  auto p = sample_uniform(erode(gt, kPointContourMargin), s);
  if (!p) p = sample_uniform(gt, s);
  return {*p, true};
}

BoxDeltas sample_box_deltas(std::uint64_t seed) {
  Rng rng(seed, {tag(Stream::box)});
  BoxDeltas d{};
  for (auto& v : d) v = rng.uniform_int(kBoxDeltaMin, kBoxDeltaMax);
  return d;
}

Box perturb_box(const Box& t, const BoxDeltas& d, int height, int width) {
  Box b{t.row_min - d[0], t.col_min - d[1], t.row_max + d[2], t.col_max + d[3]};
  if (b.row_min > b.row_max) b.row_min = b.row_max = (b.row_min + b.row_max) / 2;
  if (b.col_min > b.col_max) b.col_min = b.col_max = (b.col_min + b.col_max) / 2;
  b.row_min = std::clamp(b.row_min, 0, height - 1);
  b.row_max = std::clamp(b.row_max, 0, height - 1);
  b.col_min = std::clamp(b.col_min, 0, width - 1);
  b.col_max = std::clamp(b.col_max, 0, width - 1);
  return b;
}

Box gen_box(const Mask2D& gt, std::uint64_t seed) {
  const auto tight = bbox_of(gt);
  if (!tight) throw std::invalid_argument("gen_box: empty ground truth");
  return perturb_box(*tight, sample_box_deltas(seed), gt.height(), gt.width());
}

Mask2D gen_noisy_mask(const Mask2D& gt, std::uint64_t seed, int low_res,
                      const AffineRanges& ranges) {
  if (gt.empty())
    throw std::invalid_argument("gen_noisy_mask: empty ground truth");
  for (int attempt = 0; attempt < kNoisyMaskTries; ++attempt) {
    const auto s = derive_seed(seed, {tag(Stream::noisy_mask),
                                      static_cast<std::uint64_t>(attempt)});
    auto low = resample_nearest(random_affine(gt, ranges, s), low_res, low_res);
    if (!low.empty()) return low;
  }
  return resample_nearest(gt, low_res, low_res);
}

std::optional<PointPrompt> gen_correction_point(const Mask2D& pred,
                                                const Mask2D& gt,
                                                std::uint64_t seed) {
  const auto err = error_mask(pred, gt);
  const auto p = sample_uniform(mask_or(err.false_negatives, err.false_positives),
                                derive_seed(seed, {tag(Stream::correction)}));
  if (!p) return std::nullopt;
  return PointPrompt{*p, err.false_negatives(p->row, p->col)};
}

}  // namespace voxprompt

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "voxprompt/mask.hpp"
#include "voxprompt/mask_ops.hpp"

namespace voxprompt {

struct PointPrompt {
  Point position;
  bool positive = true;
  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

// Prompts for one slice. Coordinates refer to the grid of the image the
// prompt is applied to; `mask` is a binary mask at the low-resolution prompt
// grid (or, before mapping, at the slice's own grid).
struct PromptSet {
  std::optional<Box> box;
  std::vector<PointPrompt> points;
  std::optional<Mask2D> mask;

  bool empty() const { return !box && points.empty() && !mask; }
};

// Box perturbation range, pixels per side; positive grows the box.
inline constexpr int kBoxDeltaMin = -5;
inline constexpr int kBoxDeltaMax = 20;
// Contour margin avoided by point prompts.
inline constexpr int kPointContourMargin = 2;
// Retries before gen_noisy_mask gives up on a non-empty perturbation.
inline constexpr int kNoisyMaskTries = 8;

// (top, left, bottom, right) outward deltas.
using BoxDeltas = std::array<int, 4>;

PointPrompt gen_point(const Mask2D& gt, std::uint64_t seed);

BoxDeltas sample_box_deltas(std::uint64_t seed);
// Moves each side of `tight` outward by its delta, clips to the image and
// collapses a crossed box to its midpoint.
Box perturb_box(const Box& tight, const BoxDeltas& deltas, int height, int width);
Box gen_box(const Mask2D& gt, std::uint64_t seed);

Mask2D gen_noisy_mask(const Mask2D& gt, std::uint64_t seed, int low_res,
                      const AffineRanges& ranges = {});

std::optional<PointPrompt> gen_correction_point(const Mask2D& pred,
                                                const Mask2D& gt,
                                                std::uint64_t seed);

}  // namespace voxprompt

#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "voxprompt/mask.hpp"

namespace voxprompt {

// Chebyshev-ball (square) morphology. Pixels outside the image count as
// background, so erosion eats into masks touching the border.
Mask2D erode(const Mask2D& mask, int radius);
Mask2D dilate(const Mask2D& mask, int radius);

Mask2D mask_and(const Mask2D& a, const Mask2D& b);
Mask2D mask_or(const Mask2D& a, const Mask2D& b);
Mask2D mask_not(const Mask2D& a);
Mask2D mask_and_not(const Mask2D& a, const Mask2D& b);

std::optional<Box> bbox_of(const Mask2D& mask);

// Centroid in (row, col) pixel coordinates; (0,0) for an empty mask.
std::pair<double, double> centroid(const Mask2D& mask);

struct AffineParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double translate_rows = 0.0;
  double translate_cols = 0.0;
  int morph = 0;  // <0 erode, >0 dilate
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct AffineRanges {
  Range rotation_deg{-10.0, 10.0};
  Range scale{0.9, 1.1};
  Range translate_rows{-5.0, 5.0};
  Range translate_cols{-5.0, 5.0};
  Range morph{-2.0, 2.0};  // drawn as an integer in [lo, hi]

  static AffineRanges identity() {
    return {{0, 0}, {1, 1}, {0, 0}, {0, 0}, {0, 0}};
  }
};

// Rotation, then scale, then translation about the mask centroid
// (nearest-neighbour), then erosion/dilation.
Mask2D apply_affine(const Mask2D& mask, const AffineParams& params);
AffineParams sample_affine(const AffineRanges& ranges, std::uint64_t seed);
Mask2D random_affine(const Mask2D& mask, const AffineRanges& ranges,
                     std::uint64_t seed);

struct ErrorMasks {
  Mask2D false_negatives;
  Mask2D false_positives;
};

ErrorMasks error_mask(const Mask2D& pred, const Mask2D& gt);

// 2|A and B| / (|A| + |B|); 1 when both are empty.
double dice(const Mask2D& a, const Mask2D& b);

std::optional<Point> sample_uniform(const Mask2D& mask, std::uint64_t seed);

// Nearest-neighbour resampling to an arbitrary grid; cell centres map to
// source pixel centres.
Mask2D resample_nearest(const Mask2D& mask, int height, int width);

}  // namespace voxprompt

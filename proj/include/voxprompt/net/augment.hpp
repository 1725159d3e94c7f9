#pragma once

#include <cstdint>

#include "voxprompt/mask.hpp"
#include "voxprompt/mask_ops.hpp"
#include "voxprompt/volume_io.hpp"

namespace voxprompt::net {

// HU written into padding so that it normalises to 0 under any window.
inline constexpr float kPadHu = -2000.0f;

struct AugmentConfig {
  Range translate{-4.0, 4.0};  // pixels, drawn per axis
  Range rotation_deg{-10.0, 10.0};
  Range shear{-0.1, 0.1};
  Range zoom{0.9, 1.1};
  Range noise_sigma{0.0, 0.02};  // after normalisation
  Range window_lo{-700.0, -300.0};
  Range window_hi{800.0, 1200.0};

  static AugmentConfig identity(const WindowSpec& w = {}) {
    return {{0, 0}, {0, 0}, {0, 0}, {1, 1}, {0, 0}, {w.lo, w.lo}, {w.hi, w.hi}};
  }
};

struct AugmentParams {
  double translate_rows = 0.0;
  double translate_cols = 0.0;
  double rotation_deg = 0.0;
  double shear = 0.0;
  double zoom = 1.0;
  double noise_sigma = 0.0;
  WindowSpec window;
  std::uint64_t noise_seed = 0;

  bool geometric_identity() const {
    return translate_rows == 0 && translate_cols == 0 && rotation_deg == 0 &&
           shear == 0 && zoom == 1;
  }
};

AugmentParams sample_augment(const AugmentConfig& config, std::uint64_t seed);

struct Augmented {
  Field2D image;  // normalised, [0,1]
  Mask2D mask;
};

// hu is a square model-grid slice in HU (padding at kPadHu). The same affine
// warps image (bilinear) and mask (nearest) about the image centre; the image
// is then windowed and noised.
Augmented augment(const Field2D& hu, const Mask2D& g, const AugmentParams& params);
Augmented augment(const Field2D& hu, const Mask2D& g, const AugmentConfig& config,
                  std::uint64_t seed);

}  // namespace voxprompt::net

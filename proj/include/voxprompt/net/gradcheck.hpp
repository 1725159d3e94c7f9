#pragma once

#include <cstdint>

#include "voxprompt/net/tensor.hpp"

namespace voxprompt::net {

struct GradCheckConfig {
  // About two thousand parameters.
  ModelConfig model{16, 4, {2, 3, 4, 4}, kNumMasks, 0};
  int parameters = 200;   // how many to probe
  int batch = 2;
  double eps = 1e-5;
  // Step pair for the truncation-order check.
  double richardson_eps = 1e-3;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::size_t parameter_count = 0;
  std::size_t checked = 0;
  double loss = 0.0;
  double max_rel_error = 0.0;
  // Median of |fd(10h) - g| / |fd(h) - g|; about 100 for an O(h^2) scheme.
  double richardson_ratio = 0.0;
  std::size_t richardson_used = 0;
};

// Relative error |a - n| / max(|a|, |n|, kGradFloor).
inline constexpr double kGradFloor = 1e-6;

// Double-precision comparison of analytic multimask-loss gradients against
// central differences on a random network and random prompted batch.
GradCheckResult grad_check(const GradCheckConfig& config);

// Gradient norm at a configuration whose output already equals the target.
double stationary_gradient_norm(const GradCheckConfig& config);

}  // namespace voxprompt::net

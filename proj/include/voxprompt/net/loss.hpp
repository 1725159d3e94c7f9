#pragma once

#include <array>
#include <span>

#include "voxprompt/mask.hpp"
#include "voxprompt/net/tensor.hpp"

namespace voxprompt::net {

inline constexpr double kDiceEps = 1e-6;
inline constexpr double kProbClamp = 1e-6;

// 1 - (2 sum(m g) + eps) / (sum(m^2) + sum(g^2) + eps); probabilities in [0,1].
double dice_loss(std::span<const double> probs, const Mask2D& g);
// Mean binary cross entropy with probabilities clamped to [delta, 1-delta].
double bce_loss(std::span<const double> probs, const Mask2D& g);

// dice + bce of sigmoid(logits) for one head. When dlogits is non-null,
// scale * d(loss)/d(logit) is added to it.
template <class T>
double head_loss(const T* logits, const Mask2D& g, T* dlogits = nullptr,
                 double scale = 1.0);

struct MultimaskLoss {
  double total = 0.0;
  int selected = 1;  // best secondary head
  std::array<double, kNumMasks> per_head{};
};

// Primary loss plus the smallest secondary loss. Only the primary and the
// selected secondary receive gradient.
template <class T>
MultimaskLoss multimask_loss(const Tensor<T>& logits, const Mask2D& g,
                             Tensor<T>* dlogits = nullptr, double scale = 1.0);

// Picks the best secondary head from per-head losses (ties: lowest index).
MultimaskLoss combine_head_losses(const std::array<double, kNumMasks>& per_head);

}  // namespace voxprompt::net

#include "voxprompt/net/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace voxprompt::net {

namespace {

void check_size(std::size_t n, const Mask2D& g) {
  if (n != g.size())
    throw ShapeError("loss: " + std::to_string(n) + " probabilities vs " +
                     std::to_string(g.size()) + " mask pixels");
}

}  // namespace

double dice_loss(std::span<const double> probs, const Mask2D& g) {
  check_size(probs.size(), g);
  auto bits = g.bits();
  double inter = 0, sum_p2 = 0, sum_g = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    inter += probs[i] * bits[i];
    sum_p2 += probs[i] * probs[i];
    sum_g += bits[i];
  }
  return 1.0 - (2.0 * inter + kDiceEps) / (sum_p2 + sum_g + kDiceEps);
}

double bce_loss(std::span<const double> probs, const Mask2D& g) {
  check_size(probs.size(), g);
  if (probs.empty()) return 0.0;
  auto bits = g.bits();
  double s = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double m = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    s -= bits[i] ? std::log(m) : std::log1p(-m);
  }
  return s / static_cast<double>(probs.size());
}

template <class T>
double head_loss(const T* logits, const Mask2D& g, T* dlogits, double scale) {
  const std::size_t n = g.size();
  auto bits = g.bits();
  std::vector<double> p(n);
  double inter = 0, sum_p2 = 0, sum_g = 0, bce = 0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
    inter += p[i] * bits[i];
    sum_p2 += p[i] * p[i];
    sum_g += bits[i];
    const double m = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    bce -= bits[i] ? std::log(m) : std::log1p(-m);
  }
  const double num = 2.0 * inter + kDiceEps;
  const double den = sum_p2 + sum_g + kDiceEps;
  const double loss = 1.0 - num / den + bce / static_cast<double>(n);
  if (dlogits) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double dp = -(2.0 * bits[i] * den - num * 2.0 * p[i]) / (den * den);
      // Clamped probabilities carry no BCE gradient.
      if (p[i] > kProbClamp && p[i] < 1.0 - kProbClamp)
        dp += (bits[i] ? -1.0 / p[i] : 1.0 / (1.0 - p[i])) * inv_n;
      dlogits[i] += static_cast<T>(scale * dp * p[i] * (1.0 - p[i]));
    }
  }
  return loss;
}

MultimaskLoss combine_head_losses(const std::array<double, kNumMasks>& per_head) {
  MultimaskLoss r;
  r.per_head = per_head;
  r.selected = 1;
  for (int k = 2; k < kNumMasks; ++k)
    if (per_head[k] < per_head[r.selected]) r.selected = k;
  r.total = per_head[0] + per_head[r.selected];
  return r;
}

template <class T>
MultimaskLoss multimask_loss(const Tensor<T>& logits, const Mask2D& g,
                             Tensor<T>* dlogits, double scale) {
  if (logits.channels != kNumMasks || logits.height != g.height() ||
      logits.width != g.width())
    throw ShapeError("multimask_loss: logits and mask shapes differ");
  std::array<double, kNumMasks> per{};
  for (int k = 0; k < kNumMasks; ++k) per[k] = head_loss(logits.channel(k), g);
  auto r = combine_head_losses(per);
  if (dlogits) {
    if (!dlogits->same_shape(logits)) *dlogits = Tensor<T>(logits.channels, logits.height, logits.width);
    head_loss(logits.channel(0), g, dlogits->channel(0), scale);
    head_loss(logits.channel(r.selected), g, dlogits->channel(r.selected), scale);
  }
  return r;
}

template double head_loss<float>(const float*, const Mask2D&, float*, double);
template double head_loss<double>(const double*, const Mask2D&, double*, double);
template MultimaskLoss multimask_loss<float>(const Tensor<float>&, const Mask2D&,
                                             Tensor<float>*, double);
template MultimaskLoss multimask_loss<double>(const Tensor<double>&, const Mask2D&,
                                              Tensor<double>*, double);

}  // namespace voxprompt::net

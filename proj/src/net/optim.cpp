#include "voxprompt/net/optim.hpp"

#include <cmath>

#include "voxprompt/error.hpp"

namespace voxprompt::net {

double Adam::step(std::vector<float>& params, std::vector<float>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ShapeError("adam: parameter count changed");
  double sq = 0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (config_.clip_norm > 0 && norm > config_.clip_norm) {
    const float s = static_cast<float>(config_.clip_norm / norm);
    for (auto& g : grads) g *= s;
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.lr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = static_cast<float>(b1 * m_[i] + (1 - b1) * g);
    v_[i] = static_cast<float>(b2 * v_[i] + (1 - b2) * g * g);
    const double mh = m_[i] / c1, vh = v_[i] / c2;
    params[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + config_.eps));
  }
  return norm;
}

void Adam::restore(std::uint64_t t, std::vector<float> m, std::vector<float> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw ShapeError("adam: moment size does not match the model");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace voxprompt::net

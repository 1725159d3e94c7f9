#pragma once

#include <cstdint>
#include <vector>

namespace voxprompt::net {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global L2 norm; <= 0 disables
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, std::size_t n)
      : config_(config), m_(n, 0.0f), v_(n, 0.0f) {}

  // Clips grads in place, then updates params. Returns the pre-clip norm.
  double step(std::vector<float>& params, std::vector<float>& grads);

  const AdamConfig& config() const { return config_; }
  std::uint64_t t() const { return t_; }
  const std::vector<float>& m() const { return m_; }
  const std::vector<float>& v() const { return v_; }
  void restore(std::uint64_t t, std::vector<float> m, std::vector<float> v);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<float> m_, v_;
};

}  // namespace voxprompt::net

#pragma once

#include <vector>

#include "voxprompt/net/tensor.hpp"

namespace voxprompt::net {

// Compact encoder-decoder with skip connections and four mask heads.
//
//   image (1,S)  -> enc0 (w0,S) -> pool -> enc1 (w1,S/2) -> pool
//   [.., prompt] -> enc2 (w2,S/4) -> pool -> bottleneck (w3,S/8)
//   up -> [.., enc2, prompt] -> dec2 -> up -> [.., enc1] -> dec1
//   up -> [.., enc0] -> dec0 -> 1x1 head (4,S)
//
// Every stage is two 3x3 convolutions with ELU. The prompt channels live on
// the S/4 grid and join both the encoder path and the decoder at that level.
template <class T>
class UNet {
 public:
  struct Conv {
    int cin = 0;
    int cout = 0;
    int kernel = 3;
    std::size_t weight = 0;  // offsets into the parameter buffer
    std::size_t bias = 0;
  };

  // Forward activations kept for backprop.
  struct Cache {
    Tensor<T> x, a0, e0, p1, a1, e1, p2, q2, a2, e2, p3, a3, b, r2, a4, d2,
        r1, a5, d1, r0, a6, d0;
    std::vector<int> arg1, arg2, arg3;  // pooling argmax
  };

  explicit UNet(const ModelConfig& config);
  UNet(const ModelConfig& config, ParamStore<T> params);

  const ModelConfig& config() const { return config_; }
  const ParamStore<T>& params() const { return params_; }
  ParamStore<T>& params() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  // image: (1,S,S) in [0,1]; prompt: (4,S/4,S/4). Returns (4,S,S) logits.
  Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& prompt,
                    Cache* cache = nullptr) const;
  // Accumulates d(loss)/d(params) into grads (same layout as params()).
  void backward(const Cache& cache, const Tensor<T>& dlogits,
                std::vector<T>& grads) const;

  // Re-draws weights (He-normal) from config().seed. Biases and the 1x1
  // head start at zero.
  void initialize();

 private:
  void build();

  ModelConfig config_;
  ParamStore<T> params_;
  Conv enc0a_, enc0b_, enc1a_, enc1b_, enc2a_, enc2b_, bota_, botb_, dec2a_,
      dec2b_, dec1a_, dec1b_, dec0a_, dec0b_, head_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace voxprompt::net

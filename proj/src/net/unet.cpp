#include "voxprompt/net/unet.hpp"

#include <cmath>
#include <random>

#include "ops.hpp"
#include "voxprompt/rng.hpp"

namespace voxprompt::net {

void ModelConfig::validate() const {
  if (image_size < 8 || image_size % kDownsampling != 0)
    throw std::invalid_argument("image_size must be a positive multiple of " +
                                std::to_string(kDownsampling) + ", got " +
                                std::to_string(image_size));
  if (low_res != image_size / 4)
    throw std::invalid_argument("low_res must equal image_size / 4 (" +
                                std::to_string(image_size / 4) + "), got " +
                                std::to_string(low_res));
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("channel widths must be >= 1");
  if (num_masks != kNumMasks)
    throw std::invalid_argument("num_masks is fixed at 4");
}

Mask2D ModelOutput::binarize(int index) const {
  Mask2D m(logits.height, logits.width);
  const float* src = logits.channel(index);
  auto bits = m.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = src[i] > 0.0f ? 1 : 0;
  return m;
}

bool ModelOutput::finite() const {
  for (float v : logits.data)
    if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
UNet<T>::UNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  build();
  initialize();
}

template <class T>
UNet<T>::UNet(const ModelConfig& config, ParamStore<T> params) : config_(config) {
  config_.validate();
  build();
  if (params.entries.size() != params_.entries.size())
    throw ShapeError("parameter table has " + std::to_string(params.entries.size()) +
                     " tensors, expected " + std::to_string(params_.entries.size()));
  for (std::size_t i = 0; i < params_.entries.size(); ++i) {
    const auto& want = params_.entries[i];
    const auto& got = params.entries[i];
    if (got.name != want.name || got.shape != want.shape)
      throw ShapeError("tensor '" + want.name + "' does not match the model config");
  }
  params_.values = std::move(params.values);
}

template <class T>
void UNet<T>::build() {
  params_ = {};
  const auto& w = config_.widths;
  auto add = [&](const char* name, int cin, int cout, int k) {
    Conv c;
    c.cin = cin;
    c.cout = cout;
    c.kernel = k;
    c.weight = params_.add(std::string(name) + ".weight", {cout, cin, k, k});
    c.bias = params_.add(std::string(name) + ".bias", {cout});
    return c;
  };
  const int P = kPromptChannels;
  enc0a_ = add("enc0a", 1, w[0], 3);
  enc0b_ = add("enc0b", w[0], w[0], 3);
  enc1a_ = add("enc1a", w[0], w[1], 3);
  enc1b_ = add("enc1b", w[1], w[1], 3);
  enc2a_ = add("enc2a", w[1] + P, w[2], 3);
  enc2b_ = add("enc2b", w[2], w[2], 3);
  bota_ = add("bota", w[2], w[3], 3);
  botb_ = add("botb", w[3], w[3], 3);
  dec2a_ = add("dec2a", w[3] + w[2] + P, w[2], 3);
  dec2b_ = add("dec2b", w[2], w[2], 3);
  dec1a_ = add("dec1a", w[2] + w[1], w[1], 3);
  dec1b_ = add("dec1b", w[1], w[1], 3);
  dec0a_ = add("dec0a", w[1] + w[0], w[0], 3);
  dec0b_ = add("dec0b", w[0], w[0], 3);
  head_ = add("head", w[0], config_.num_masks, 1);
}

template <class T>
void UNet<T>::initialize() {
  std::fill(params_.values.begin(), params_.values.end(), T(0));
  Rng rng(config_.seed, {tag(Stream::init)});
  for (const Conv* c : {&enc0a_, &enc0b_, &enc1a_, &enc1b_, &enc2a_, &enc2b_,
                        &bota_, &botb_, &dec2a_, &dec2b_, &dec1a_, &dec1b_,
                        &dec0a_, &dec0b_, &head_}) {
    const std::size_t fan_in = static_cast<std::size_t>(c->cin) * c->kernel * c->kernel;
    const std::size_t n = fan_in * c->cout;
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i)
      params_.values[c->weight + i] = static_cast<T>(rng.normal(0.0, sd));
  }
  // Zero head: every logit starts at 0, sigmoid 0.5.
  std::fill_n(params_.values.begin() + head_.weight,
              static_cast<std::size_t>(head_.cin) * head_.cout, T(0));
}

template <class T>
Tensor<T> UNet<T>::forward(const Tensor<T>& image, const Tensor<T>& prompt,
                           Cache* cache) const {
  const int S = config_.image_size;
  if (image.channels != 1 || image.height != S || image.width != S)
    throw ShapeError("image must be 1x" + std::to_string(S) + "x" + std::to_string(S));
  if (prompt.channels != kPromptChannels || prompt.height != config_.low_res ||
      prompt.width != config_.low_res)
    throw ShapeError("prompt must be " + std::to_string(kPromptChannels) + "x" +
                     std::to_string(config_.low_res) + "x" +
                     std::to_string(config_.low_res));

  Cache local;
  Cache& c = cache ? *cache : local;
  std::vector<T> scratch;
  const auto& p = params_.values;
  auto conv_elu = [&](const Conv& cv, const Tensor<T>& in) {
    auto out = ops::conv_forward(cv, p, in, scratch);
    ops::elu_inplace(out);
    return out;
  };

  c.x = image;
  c.a0 = conv_elu(enc0a_, c.x);
  c.e0 = conv_elu(enc0b_, c.a0);
  c.p1 = ops::maxpool2(c.e0, c.arg1);
  c.a1 = conv_elu(enc1a_, c.p1);
  c.e1 = conv_elu(enc1b_, c.a1);
  c.p2 = ops::maxpool2(c.e1, c.arg2);
  c.q2 = ops::concat<T>({&c.p2, &prompt});
  c.a2 = conv_elu(enc2a_, c.q2);
  c.e2 = conv_elu(enc2b_, c.a2);
  c.p3 = ops::maxpool2(c.e2, c.arg3);
  c.a3 = conv_elu(bota_, c.p3);
  c.b = conv_elu(botb_, c.a3);
  {
    auto up = ops::upsample2(c.b);
    c.r2 = ops::concat<T>({&up, &c.e2, &prompt});
  }
  c.a4 = conv_elu(dec2a_, c.r2);
  c.d2 = conv_elu(dec2b_, c.a4);
  {
    auto up = ops::upsample2(c.d2);
    c.r1 = ops::concat<T>({&up, &c.e1});
  }
  c.a5 = conv_elu(dec1a_, c.r1);
  c.d1 = conv_elu(dec1b_, c.a5);
  {
    auto up = ops::upsample2(c.d1);
    c.r0 = ops::concat<T>({&up, &c.e0});
  }
  c.a6 = conv_elu(dec0a_, c.r0);
  c.d0 = conv_elu(dec0b_, c.a6);
  return ops::conv_forward(head_, p, c.d0, scratch);
}

template <class T>
void UNet<T>::backward(const Cache& c, const Tensor<T>& dlogits,
                       std::vector<T>& grads) const {
  if (grads.size() != params_.size()) grads.assign(params_.size(), T(0));
  const auto& p = params_.values;
  const auto& w = config_.widths;
  std::vector<T> scratch;

  // Gradient through conv+ELU: g is d(out) and is consumed.
  auto back = [&](const Conv& cv, const Tensor<T>& in, const Tensor<T>& out,
                  Tensor<T>& g, bool need_input = true) {
    ops::elu_backward_inplace(out, g);
    return ops::conv_backward(cv, p, in, g, grads, scratch, need_input);
  };

  auto g = ops::conv_backward(head_, p, c.d0, dlogits, grads, scratch);
  g = back(dec0b_, c.a6, c.d0, g);
  g = back(dec0a_, c.r0, c.a6, g);
  auto de0 = ops::take_channels(g, w[1], w[0]);
  auto dd1 = ops::upsample2_backward(ops::take_channels(g, 0, w[1]));

  g = back(dec1b_, c.a5, c.d1, dd1);
  g = back(dec1a_, c.r1, c.a5, g);
  auto de1 = ops::take_channels(g, w[2], w[1]);
  auto dd2 = ops::upsample2_backward(ops::take_channels(g, 0, w[2]));

  g = back(dec2b_, c.a4, c.d2, dd2);
  g = back(dec2a_, c.r2, c.a4, g);
  auto de2 = ops::take_channels(g, w[3], w[2]);
  auto db = ops::upsample2_backward(ops::take_channels(g, 0, w[3]));

  g = back(botb_, c.a3, c.b, db);
  g = back(bota_, c.p3, c.a3, g);
  ops::maxpool2_backward(g, c.arg3, de2);

  g = back(enc2b_, c.a2, c.e2, de2);
  g = back(enc2a_, c.q2, c.a2, g);
  ops::maxpool2_backward(ops::take_channels(g, 0, w[1]), c.arg2, de1);

  g = back(enc1b_, c.a1, c.e1, de1);
  g = back(enc1a_, c.p1, c.a1, g);
  ops::maxpool2_backward(g, c.arg1, de0);

  g = back(enc0b_, c.a0, c.e0, de0);
  back(enc0a_, c.x, c.a0, g, false);
}

template class UNet<float>;
template class UNet<double>;

}  // namespace voxprompt::net

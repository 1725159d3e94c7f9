#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "voxprompt/error.hpp"
#include "voxprompt/mask.hpp"

namespace voxprompt::net {

// Dense (channels, height, width) tensor.
template <class T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }
  T* channel(int c) { return data.data() + plane() * c; }
  const T* channel(int c) const { return data.data() + plane() * c; }
  T& operator()(int c, int r, int col) {
    return data[plane() * c + static_cast<std::size_t>(r) * width + col];
  }
  T operator()(int c, int r, int col) const {
    return data[plane() * c + static_cast<std::size_t>(r) * width + col];
  }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(channels, height, width);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

inline constexpr int kNumMasks = 4;      // one primary + three secondary
inline constexpr int kPromptChannels = 4;  // mask, +points, -points, box

struct ModelConfig {
  int image_size = 128;
  int low_res = 32;
  // Encoder widths at full, 1/2, 1/4 and 1/8 resolution.
  std::array<int, 4> widths{16, 32, 64, 64};
  int num_masks = kNumMasks;
  std::uint64_t seed = 0;

  // Total encoder downsampling; the prompt grid sits at image_size / 4.
  static constexpr int kDownsampling = 8;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Four logit masks for one slice: index 0 primary, 1..3 secondary.
struct ModelOutput {
  Tensor<float> logits;

  Mask2D binarize(int index) const;  // logit > 0
  Mask2D primary() const { return binarize(0); }
  bool finite() const;
};

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

// All trainable parameters in one flat buffer, addressed by a name table.
template <class T>
struct ParamStore {
  std::vector<ParamEntry> entries;
  std::vector<T> values;

  std::size_t add(const std::string& name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    entries.push_back({name, std::move(shape), values.size(), n});
    values.resize(values.size() + n, T(0));
    return entries.back().offset;
  }
  const ParamEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  std::size_t size() const { return values.size(); }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.entries = entries;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

}  // namespace voxprompt::net

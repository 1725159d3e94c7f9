#pragma once

#include <array>
#include <functional>
#include <memory>

#include "voxprompt/net/tensor.hpp"
#include "voxprompt/net/unet.hpp"
#include "voxprompt/prompts.hpp"
#include "voxprompt/volume_io.hpp"

namespace voxprompt {

// Four binary masks on the native slice grid; 0 primary, 1..3 secondary.
struct SlicePrediction {
  std::array<Mask2D, net::kNumMasks> masks;
  const Mask2D& primary() const { return masks[0]; }
};

// Anything that turns (slice image, prompts) into four masks. Prompts are in
// model-grid pixels with the mask prompt on the low-res grid; `slice` is the
// slice index inside the volume.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual const net::ModelConfig& config() const = 0;
  virtual SlicePrediction predict(const SliceImage& image, const PromptSet& prompt,
                                  int slice) const = 0;
};

class NetworkSegmenter : public Segmenter {
 public:
  explicit NetworkSegmenter(net::UNet<float> model) : model_(std::move(model)) {}

  const net::ModelConfig& config() const override { return model_.config(); }
  SlicePrediction predict(const SliceImage& image, const PromptSet& prompt,
                          int slice) const override;
  // Raw logits on the model grid.
  net::ModelOutput forward(const SliceImage& image, const PromptSet& prompt) const;

  const net::UNet<float>& model() const { return model_; }

 private:
  net::UNet<float> model_;
};

// Test double that ignores its prompts and returns the ground truth slice on
// every head.
class OracleSegmenter : public Segmenter {
 public:
  OracleSegmenter(Mask3D truth, net::ModelConfig config = {})
      : truth_(std::move(truth)), config_(config) {}

  const net::ModelConfig& config() const override { return config_; }
  SlicePrediction predict(const SliceImage& image, const PromptSet& prompt,
                          int slice) const override;

 private:
  Mask3D truth_;
  net::ModelConfig config_;
};

// Builds the segmenter for one evaluated object. Network backends ignore the
// truth and hand back a shared instance.
using SegmenterFactory =
    std::function<std::shared_ptr<const Segmenter>(const Mask3D& truth)>;

SegmenterFactory shared_factory(std::shared_ptr<const Segmenter> s);
SegmenterFactory oracle_factory(net::ModelConfig config = {});

}  // namespace voxprompt

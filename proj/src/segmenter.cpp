#include "voxprompt/segmenter.hpp"

#include "voxprompt/net/prompt_encoding.hpp"

namespace voxprompt {

net::ModelOutput NetworkSegmenter::forward(const SliceImage& image,
                                           const PromptSet& prompt) const {
  const auto& px = image.pixels;
  net::Tensor<float> t(1, px.height, px.width);
  std::copy(px.values.begin(), px.values.end(), t.data.begin());
  return {model_.forward(t, net::encode_prompts(prompt, model_.config()))};
}

SlicePrediction NetworkSegmenter::predict(const SliceImage& image,
                                          const PromptSet& prompt, int) const {
  const auto out = forward(image, prompt);
  SlicePrediction p;
  for (int k = 0; k < net::kNumMasks; ++k) p.masks[k] = unpad_mask(out.binarize(k), image.pad);
  return p;
}

SlicePrediction OracleSegmenter::predict(const SliceImage& image, const PromptSet&,
                                         int slice) const {
  if (truth_.height() != image.pad.source_height || truth_.width() != image.pad.source_width)
    throw ShapeError("oracle: slice size differs from the truth volume");
  SlicePrediction p;
  p.masks.fill(truth_.slice(slice));
  return p;
}

SegmenterFactory shared_factory(std::shared_ptr<const Segmenter> s) {
  return [s](const Mask3D&) { return s; };
}

SegmenterFactory oracle_factory(net::ModelConfig config) {
  return [config](const Mask3D& truth) {
    return std::make_shared<const OracleSegmenter>(truth, config);
  };
}

}  // namespace voxprompt

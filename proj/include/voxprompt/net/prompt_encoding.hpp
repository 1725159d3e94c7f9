#pragma once

#include "voxprompt/net/tensor.hpp"
#include "voxprompt/prompts.hpp"

namespace voxprompt::net {

// Bump width in low-res grid cells.
inline constexpr double kPointSigma = 1.5;

// Rasterizes prompts onto the (low_res, low_res) grid:
//   ch0 mask prompt, ch1 positive points, ch2 negative points, ch3 box.
// Point and box coordinates are model-image pixels (image_size grid). A mask
// whose size differs from the grid is resampled nearest-neighbour.
Tensor<float> encode_prompts(const PromptSet& prompts, const ModelConfig& config);

}  // namespace voxprompt::net

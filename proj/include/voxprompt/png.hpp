#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace voxprompt {

// 8-bit grayscale PNG, one IDAT chunk, no filtering.
std::vector<std::uint8_t> encode_png_gray8(std::span<const std::uint8_t> pixels,
                                           int width, int height);

}  // namespace voxprompt

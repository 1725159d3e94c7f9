#pragma once

#include <array>
#include <vector>

#include "voxprompt/mask.hpp"

namespace voxprompt {

// Foreground runs over row-major pixel order, each [start, length].
using Runs = std::vector<std::array<int, 2>>;

Runs rle_encode(const Mask2D& mask);
// Rejects runs that overlap, are unordered or leave the image.
Mask2D rle_decode(const Runs& runs, int height, int width);

}  // namespace voxprompt

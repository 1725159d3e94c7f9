#include "voxprompt/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace voxprompt {

Mask2D::Mask2D(int height, int width) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ShapeError("Mask2D: negative size");
  bits_.assign(static_cast<std::size_t>(height) * width, 0);
}

std::size_t Mask2D::count() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(), [](auto b) { return b != 0; }));
}

Mask3D::Mask3D(int depth, int height, int width)
    : depth_(depth), height_(height), width_(width) {
  if (depth < 0 || height < 0 || width < 0)
    throw ShapeError("Mask3D: negative size");
  bits_.assign(static_cast<std::size_t>(depth) * height * width, 0);
}

Mask2D Mask3D::slice(int z) const {
  Mask2D m(height_, width_);
  auto src = bits_.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0));
  std::copy(src, src + static_cast<std::ptrdiff_t>(m.size()), m.bits().begin());
  return m;
}

void Mask3D::set_slice(int z, const Mask2D& m) {
  if (m.height() != height_ || m.width() != width_)
    throw ShapeError("Mask3D::set_slice: slice is " +
                     std::to_string(m.height()) + "x" +
                     std::to_string(m.width()) + ", volume plane is " +
                     std::to_string(height_) + "x" + std::to_string(width_));
  std::copy(m.bits().begin(), m.bits().end(),
            bits_.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0)));
}

void Mask3D::clear_slice(int z) {
  auto first = bits_.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0));
  std::fill(first,
            first + static_cast<std::ptrdiff_t>(height_) * width_, 0);
}

std::size_t Mask3D::slice_count(int z) const {
  auto first = bits_.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0));
  return static_cast<std::size_t>(
      std::count_if(first, first + static_cast<std::ptrdiff_t>(height_) * width_,
                    [](auto b) { return b != 0; }));
}

std::size_t Mask3D::count() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(), [](auto b) { return b != 0; }));
}

}  // namespace voxprompt

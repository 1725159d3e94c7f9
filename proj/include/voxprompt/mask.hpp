#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "voxprompt/error.hpp"

namespace voxprompt {

struct Point {
  int row = 0;
  int col = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Inclusive pixel bounds.
struct Box {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;
  int height() const { return row_max - row_min + 1; }
  int width() const { return col_max - col_min + 1; }
  friend bool operator==(const Box&, const Box&) = default;
};

// Row-major binary mask, one byte per pixel (0 or 1).
class Mask2D {
 public:
  Mask2D() = default;
  Mask2D(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  bool same_shape(const Mask2D& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  bool operator()(int row, int col) const {
    return bits_[static_cast<std::size_t>(row) * width_ + col] != 0;
  }
  void set(int row, int col, bool v = true) {
    bits_[static_cast<std::size_t>(row) * width_ + col] = v ? 1 : 0;
  }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  friend bool operator==(const Mask2D&, const Mask2D&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Stack of slices, index order (slice, row, col).
class Mask3D {
 public:
  Mask3D() = default;
  Mask3D(int depth, int height, int width);

  int depth() const { return depth_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  bool same_shape(const Mask3D& o) const {
    return depth_ == o.depth_ && height_ == o.height_ && width_ == o.width_;
  }

  bool operator()(int z, int row, int col) const {
    return bits_[index(z, row, col)] != 0;
  }
  void set(int z, int row, int col, bool v = true) {
    bits_[index(z, row, col)] = v ? 1 : 0;
  }

  Mask2D slice(int z) const;
  void set_slice(int z, const Mask2D& m);
  void clear_slice(int z);
  std::size_t slice_count(int z) const;

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }
  std::size_t count() const;

  friend bool operator==(const Mask3D&, const Mask3D&) = default;

 private:
  std::size_t index(int z, int row, int col) const {
    return (static_cast<std::size_t>(z) * height_ + row) * width_ + col;
  }
  int depth_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace voxprompt

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "voxprompt/volume_io.hpp"

namespace voxprompt {
namespace {

void validate_geometry(const Dims& d, const Spacing& s) {
  if (d.z < 1 || d.y < 1 || d.x < 1)
    throw ShapeError("volume dims must all be >= 1");
  if (!(s.z > 0) || !(s.y > 0) || !(s.x > 0))
    throw std::invalid_argument("volume spacing must all be > 0");
}

// Spacing is stored as float32 on disk; keep it at that precision so a
// write/read cycle compares equal.
// The volatile store stops GCC 11 at -O3 from vectorizing the narrowing away.
double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return f;
}

Spacing as_stored(const Spacing& s) { return {to_f32(s.z), to_f32(s.y), to_f32(s.x)}; }

}  // namespace

Volume::Volume(Dims dims, Spacing spacing, float fill)
    : dims_(dims), spacing_(as_stored(spacing)), voxels_(dims.voxels(), fill) {
  validate_geometry(dims, spacing);
}

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> voxels)
    : dims_(dims), spacing_(as_stored(spacing)), voxels_(std::move(voxels)) {
  validate_geometry(dims, spacing);
  if (voxels_.size() != dims.voxels())
    throw ShapeError("volume: voxel count " + std::to_string(voxels_.size()) +
                     " != product of dims " + std::to_string(dims.voxels()));
}

Field2D Volume::slice(int z) const {
  if (z < 0 || z >= dims_.z) throw std::out_of_range("slice index");
  Field2D f(dims_.y, dims_.x);
  const auto first = voxels_.begin() + static_cast<std::ptrdiff_t>(index(z, 0, 0));
  std::copy(first, first + static_cast<std::ptrdiff_t>(f.values.size()),
            f.values.begin());
  return f;
}

LabelVolume::LabelVolume(Dims dims, Spacing spacing)
    : dims_(dims), spacing_(as_stored(spacing)), labels_(dims.voxels(), 0) {
  validate_geometry(dims, spacing);
}

Mask3D LabelVolume::class_mask(std::int32_t class_id) const {
  Mask3D m(dims_.z, dims_.y, dims_.x);
  for (std::size_t i = 0; i < labels_.size(); ++i)
    m.bits()[i] = labels_[i] == class_id ? 1 : 0;
  return m;
}

std::vector<std::int32_t> LabelVolume::present_classes() const {
  std::set<std::int32_t> s;
  for (auto v : labels_)
    if (v > 0) s.insert(v);
  return {s.begin(), s.end()};
}

// ----------------------------------------------------------------- window

void validate(const WindowSpec& w) {
  if (!(w.lo < w.hi))
    throw std::invalid_argument("window: lo must be < hi");
}

float window_value(float hu, const WindowSpec& w) {
  const double v = (static_cast<double>(hu) - w.lo) / (w.hi - w.lo);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

Volume window_normalize(const Volume& volume, const WindowSpec& window) {
  validate(window);
  Volume out = volume;
  for (auto& v : out.voxels()) v = window_value(v, window);
  return out;
}

Field2D window_normalize(const Field2D& hu, const WindowSpec& window) {
  validate(window);
  Field2D out = hu;
  for (auto& v : out.values) v = window_value(v, window);
  return out;
}

// ------------------------------------------------------------ resize / pad

std::array<double, 2> PadInfo::to_model(double row, double col) const {
  return {(row + 0.5) * scale_rows() - 0.5 + pad_top,
          (col + 0.5) * scale_cols() - 0.5 + pad_left};
}

std::array<double, 2> PadInfo::to_source(double row, double col) const {
  return {(row - pad_top + 0.5) / scale_rows() - 0.5,
          (col - pad_left + 0.5) / scale_cols() - 0.5};
}

namespace {
int clamp_round(double v, int hi) {
  return std::clamp(static_cast<int>(std::lround(v)), 0, hi);
}
}  // namespace

Point PadInfo::to_model(Point p) const {
  const auto m = to_model(p.row, p.col);
  return {clamp_round(m[0], target - 1), clamp_round(m[1], target - 1)};
}

Point PadInfo::to_source(Point p) const {
  const auto s = to_source(p.row, p.col);
  return {clamp_round(s[0], source_height - 1),
          clamp_round(s[1], source_width - 1)};
}

Box PadInfo::to_model(const Box& b) const {
  // Edges rather than centres so the box keeps covering whole pixels.
  const int r0 = static_cast<int>(std::floor(b.row_min * scale_rows())) + pad_top;
  const int c0 = static_cast<int>(std::floor(b.col_min * scale_cols())) + pad_left;
  const int r1 =
      static_cast<int>(std::ceil((b.row_max + 1) * scale_rows())) - 1 + pad_top;
  const int c1 =
      static_cast<int>(std::ceil((b.col_max + 1) * scale_cols())) - 1 + pad_left;
  return {r0, c0, std::max(r0, r1), std::max(c0, c1)};
}

Box PadInfo::to_source(const Box& b) const {
  auto clamp_r = [&](double v) { return std::clamp(static_cast<int>(v), 0, source_height - 1); };
  auto clamp_c = [&](double v) { return std::clamp(static_cast<int>(v), 0, source_width - 1); };
  const int r0 = clamp_r(std::floor((b.row_min - pad_top) / scale_rows()));
  const int c0 = clamp_c(std::floor((b.col_min - pad_left) / scale_cols()));
  const int r1 = clamp_r(std::ceil((b.row_max + 1 - pad_top) / scale_rows()) - 1);
  const int c1 = clamp_c(std::ceil((b.col_max + 1 - pad_left) / scale_cols()) - 1);
  return {r0, c0, std::max(r0, r1), std::max(c0, c1)};
}

PadInfo make_pad_info(int source_height, int source_width, int target) {
  if (source_height < 1 || source_width < 1)
    throw ShapeError("resize_pad: degenerate slice " +
                     std::to_string(source_height) + "x" +
                     std::to_string(source_width));
  if (target < 8) throw ShapeError("resize_pad: target must be >= 8");
  const double scale =
      static_cast<double>(target) / std::max(source_height, source_width);
  PadInfo p;
  p.target = target;
  p.source_height = source_height;
  p.source_width = source_width;
  p.content_height = std::clamp(
      static_cast<int>(std::lround(source_height * scale)), 1, target);
  p.content_width = std::clamp(
      static_cast<int>(std::lround(source_width * scale)), 1, target);
  p.pad_top = (target - p.content_height) / 2;
  p.pad_left = (target - p.content_width) / 2;
  return p;
}

SliceImage resize_pad(const Field2D& slice, int target) {
  SliceImage out;
  out.pad = make_pad_info(slice.height, slice.width, target);
  const auto& p = out.pad;
  out.pixels = Field2D(target, target, 0.0f);
  if (p.content_height == slice.height && p.content_width == slice.width) {
    for (int r = 0; r < slice.height; ++r)
      for (int c = 0; c < slice.width; ++c)
        out.pixels(r + p.pad_top, c + p.pad_left) = slice(r, c);
    return out;
  }
  const double sy = p.scale_rows();
  const double sx = p.scale_cols();
  for (int r = 0; r < p.content_height; ++r) {
    const double fy = std::clamp((r + 0.5) / sy - 0.5, 0.0,
                                 static_cast<double>(slice.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, slice.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < p.content_width; ++c) {
      const double fx = std::clamp((c + 0.5) / sx - 0.5, 0.0,
                                   static_cast<double>(slice.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, slice.width - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * slice(y0, x0) + wx * slice(y0, x1)) +
                       wy * ((1 - wx) * slice(y1, x0) + wx * slice(y1, x1));
      out.pixels(r + p.pad_top, c + p.pad_left) = static_cast<float>(v);
    }
  }
  return out;
}

Mask2D resize_pad_mask(const Mask2D& mask, const PadInfo& p) {
  if (mask.height() != p.source_height || mask.width() != p.source_width)
    throw ShapeError("resize_pad_mask: mask does not match pad_info source");
  Mask2D out(p.target, p.target);
  const double sy = p.scale_rows();
  const double sx = p.scale_cols();
  for (int r = 0; r < p.content_height; ++r) {
    const int ir = std::min(mask.height() - 1,
                            static_cast<int>(std::floor((r + 0.5) / sy)));
    for (int c = 0; c < p.content_width; ++c) {
      const int ic = std::min(mask.width() - 1,
                              static_cast<int>(std::floor((c + 0.5) / sx)));
      if (mask(ir, ic)) out.set(r + p.pad_top, c + p.pad_left);
    }
  }
  return out;
}

Mask2D unpad_mask(const Mask2D& model_mask, const PadInfo& p) {
  Mask2D out(p.source_height, p.source_width);
  const double sy = p.scale_rows();
  const double sx = p.scale_cols();
  for (int r = 0; r < p.source_height; ++r) {
    const int mr = std::min(p.content_height - 1,
                            static_cast<int>(std::floor((r + 0.5) * sy))) +
                   p.pad_top;
    for (int c = 0; c < p.source_width; ++c) {
      const int mc = std::min(p.content_width - 1,
                              static_cast<int>(std::floor((c + 0.5) * sx))) +
                     p.pad_left;
      if (model_mask.contains(mr, mc) && model_mask(mr, mc)) out.set(r, c);
    }
  }
  return out;
}

bool keep_slice(const Mask2D& label_slice, std::size_t min_pixels) {
  return label_slice.count() >= min_pixels && label_slice.count() > 0;
}

}  // namespace voxprompt

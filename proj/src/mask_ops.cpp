#include "voxprompt/mask_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "voxprompt/rng.hpp"

namespace voxprompt {
namespace {

void require_same(const Mask2D& a, const Mask2D& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": mask sizes differ (" +
                     std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " +
                     std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
}

// One separable pass of a running window of half-width r along rows
// (horizontal) or columns. want_all: erosion semantics, else dilation.
Mask2D window_pass(const Mask2D& in, int r, bool horizontal, bool want_all) {
  const int h = in.height();
  const int w = in.width();
  Mask2D out(h, w);
  const int lines = horizontal ? h : w;
  const int len = horizontal ? w : h;
  std::vector<int> prefix(static_cast<std::size_t>(len) + 1);
  for (int l = 0; l < lines; ++l) {
    prefix[0] = 0;
    for (int i = 0; i < len; ++i) {
      const bool v = horizontal ? in(l, i) : in(i, l);
      prefix[i + 1] = prefix[i] + (v ? 1 : 0);
    }
    for (int i = 0; i < len; ++i) {
      const int lo = i - r;
      const int hi = i + r;
      const int clo = std::max(lo, 0);
      const int chi = std::min(hi, len - 1);
      const int n = prefix[chi + 1] - prefix[clo];
      bool v;
      if (want_all)
        v = lo >= 0 && hi < len && n == (2 * r + 1);
      else
        v = n > 0;
      if (horizontal)
        out.set(l, i, v);
      else
        out.set(i, l, v);
    }
  }
  return out;
}

}  // namespace

Mask2D erode(const Mask2D& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("erode: negative radius");
  if (radius == 0) return mask;
  return window_pass(window_pass(mask, radius, true, true), radius, false, true);
}

Mask2D dilate(const Mask2D& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: negative radius");
  if (radius == 0) return mask;
  return window_pass(window_pass(mask, radius, true, false), radius, false,
                     false);
}

Mask2D mask_and(const Mask2D& a, const Mask2D& b) {
  require_same(a, b, "mask_and");
  Mask2D out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.bits()[i] = a.bits()[i] & b.bits()[i];
  return out;
}

Mask2D mask_or(const Mask2D& a, const Mask2D& b) {
  require_same(a, b, "mask_or");
  Mask2D out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.bits()[i] = a.bits()[i] | b.bits()[i];
  return out;
}

Mask2D mask_not(const Mask2D& a) {
  Mask2D out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.bits()[i] = a.bits()[i] ? 0 : 1;
  return out;
}

Mask2D mask_and_not(const Mask2D& a, const Mask2D& b) {
  require_same(a, b, "mask_and_not");
  Mask2D out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.bits()[i] = (a.bits()[i] && !b.bits()[i]) ? 1 : 0;
  return out;
}

std::optional<Box> bbox_of(const Mask2D& mask) {
  Box b{mask.height(), mask.width(), -1, -1};
  bool any = false;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask(r, c)) {
        any = true;
        b.row_min = std::min(b.row_min, r);
        b.row_max = std::max(b.row_max, r);
        b.col_min = std::min(b.col_min, c);
        b.col_max = std::max(b.col_max, c);
      }
  if (!any) return std::nullopt;
  return b;
}

std::pair<double, double> centroid(const Mask2D& mask) {
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask(r, c)) {
        sr += r;
        sc += c;
        ++n;
      }
  if (n == 0) return {0.0, 0.0};
  return {sr / static_cast<double>(n), sc / static_cast<double>(n)};
}

Mask2D apply_affine(const Mask2D& mask, const AffineParams& p) {
  if (!(p.scale > 0)) throw std::invalid_argument("apply_affine: scale <= 0");
  const auto [cr, cc] = centroid(mask);
  const double th = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th);
  const double sn = std::sin(th);
  const int h = mask.height();
  const int w = mask.width();
  Mask2D out(h, w);
  const bool identity_map = p.rotation_deg == 0.0 && p.scale == 1.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // Inverse map: source = centre + R(-th) (q - centre - t) / s.
      const double dy = r - cr - p.translate_rows;
      const double dx = c - cc - p.translate_cols;
      double sy, sx;
      if (identity_map) {
        sy = cr + dy;
        sx = cc + dx;
      } else {
        sy = cr + (cs * dy - sn * dx) / p.scale;
        sx = cc + (sn * dy + cs * dx) / p.scale;
      }
      const int ir = static_cast<int>(std::lround(sy));
      const int ic = static_cast<int>(std::lround(sx));
      if (mask.contains(ir, ic) && mask(ir, ic)) out.set(r, c);
    }
  }
  if (p.morph > 0) return dilate(out, p.morph);
  if (p.morph < 0) return erode(out, -p.morph);
  return out;
}

AffineParams sample_affine(const AffineRanges& g, std::uint64_t seed) {
  Rng rng(seed, {tag(Stream::noisy_mask)});
  AffineParams p;
  p.rotation_deg = rng.uniform(g.rotation_deg.lo, g.rotation_deg.hi);
  p.scale = rng.uniform(g.scale.lo, g.scale.hi);
  p.translate_rows = rng.uniform(g.translate_rows.lo, g.translate_rows.hi);
  p.translate_cols = rng.uniform(g.translate_cols.lo, g.translate_cols.hi);
  const int mlo = static_cast<int>(std::ceil(g.morph.lo));
  const int mhi = static_cast<int>(std::floor(g.morph.hi));
  p.morph = mlo >= mhi ? mlo : rng.uniform_int(mlo, mhi);
  return p;
}

Mask2D random_affine(const Mask2D& mask, const AffineRanges& ranges,
                     std::uint64_t seed) {
  return apply_affine(mask, sample_affine(ranges, seed));
}

ErrorMasks error_mask(const Mask2D& pred, const Mask2D& gt) {
  require_same(pred, gt, "error_mask");
  return {mask_and_not(gt, pred), mask_and_not(pred, gt)};
}

std::optional<Point> sample_uniform(const Mask2D& mask, std::uint64_t seed) {
  const std::size_t n = mask.count();
  if (n == 0) return std::nullopt;
  Rng rng(seed, {tag(Stream::sampling)});
  std::uint64_t k = rng.uniform_index(n);
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    if (k == 0)
      return Point{static_cast<int>(i / static_cast<std::size_t>(mask.width())),
                   static_cast<int>(i % static_cast<std::size_t>(mask.width()))};
    --k;
  }
  return std::nullopt;  // unreachable
}

Mask2D resample_nearest(const Mask2D& mask, int height, int width) {
  if (mask.height() == height && mask.width() == width) return mask;
  Mask2D out(height, width);
  if (mask.height() == 0 || mask.width() == 0) return out;
  const double sy = static_cast<double>(mask.height()) / height;
  const double sx = static_cast<double>(mask.width()) / width;
  for (int r = 0; r < height; ++r) {
    const int ir = std::min(mask.height() - 1,
                            static_cast<int>(std::floor((r + 0.5) * sy)));
    for (int c = 0; c < width; ++c) {
      const int ic = std::min(mask.width() - 1,
                              static_cast<int>(std::floor((c + 0.5) * sx)));
      if (mask(ir, ic)) out.set(r, c);
    }
  }
  return out;
}

}  // namespace voxprompt

namespace voxprompt {

double dice(const Mask2D& a, const Mask2D& b) {
  require_same(a, b, "dice");
  std::size_t inter = 0, sa = 0, sb = 0;
  auto x = a.bits(), y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += x[i] & y[i];
    sa += x[i];
    sb += y[i];
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

}  // namespace voxprompt

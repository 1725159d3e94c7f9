#include "voxprompt/net/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "voxprompt/rng.hpp"

namespace voxprompt::net {

AugmentParams sample_augment(const AugmentConfig& c, std::uint64_t seed) {
  Rng rng(seed, {tag(Stream::augment)});
  AugmentParams p;
  p.translate_rows = rng.uniform(c.translate.lo, c.translate.hi);
  p.translate_cols = rng.uniform(c.translate.lo, c.translate.hi);
  p.rotation_deg = rng.uniform(c.rotation_deg.lo, c.rotation_deg.hi);
  p.shear = rng.uniform(c.shear.lo, c.shear.hi);
  p.zoom = rng.uniform(c.zoom.lo, c.zoom.hi);
  p.noise_sigma = rng.uniform(c.noise_sigma.lo, c.noise_sigma.hi);
  p.window.lo = rng.uniform(c.window_lo.lo, c.window_lo.hi);
  p.window.hi = rng.uniform(c.window_hi.lo, c.window_hi.hi);
  p.noise_seed = rng.next();
  return p;
}

namespace {

float sample_bilinear(const Field2D& f, double r, double c) {
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const double fr = r - r0, fc = c - c0;
  auto at = [&](int rr, int cc) -> double {
    if (rr < 0 || cc < 0 || rr >= f.height || cc >= f.width) return kPadHu;
    return f(rr, cc);
  };
  const double top = at(r0, c0) * (1 - fc) + at(r0, c0 + 1) * fc;
  const double bot = at(r0 + 1, c0) * (1 - fc) + at(r0 + 1, c0 + 1) * fc;
  return static_cast<float>(top * (1 - fr) + bot * fr);
}

}  // namespace

Augmented augment(const Field2D& hu, const Mask2D& g, const AugmentParams& p) {
  if (g.height() != hu.height || g.width() != hu.width)
    throw ShapeError("augment: image and mask sizes differ");
  validate(p.window);
  Augmented out{Field2D(hu.height, hu.width), Mask2D(hu.height, hu.width)};
  Field2D warped;
  if (p.geometric_identity()) {
    warped = hu;
    out.mask = g;
  } else {
    // Forward map o = Z*R*Sh*(s - c) + c + t; invert it per output pixel.
    const double th = p.rotation_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const double a = p.zoom * ct, b = p.zoom * (ct * p.shear - st);
    const double cc = p.zoom * st, d = p.zoom * (st * p.shear + ct);
    const double det = a * d - b * cc;
    const double ia = d / det, ib = -b / det, ic = -cc / det, id = a / det;
    const double cr = (hu.height - 1) / 2.0, ccol = (hu.width - 1) / 2.0;
    warped = Field2D(hu.height, hu.width);
    for (int r = 0; r < hu.height; ++r)
      for (int c = 0; c < hu.width; ++c) {
        const double y = r - cr - p.translate_rows;
        const double x = c - ccol - p.translate_cols;
        const double sr = ia * y + ib * x + cr;
        const double sc = ic * y + id * x + ccol;
        warped(r, c) = sample_bilinear(hu, sr, sc);
        const int nr = static_cast<int>(std::lround(sr));
        const int nc = static_cast<int>(std::lround(sc));
        if (g.contains(nr, nc) && g(nr, nc)) out.mask.set(r, c);
      }
  }
  out.image = window_normalize(warped, p.window);
  if (p.noise_sigma > 0) {
    Rng rng(p.noise_seed);
    std::normal_distribution<double> noise(0.0, p.noise_sigma);
    for (auto& v : out.image.values)
      v = static_cast<float>(std::clamp(v + noise(rng.engine()), 0.0, 1.0));
  }
  return out;
}

Augmented augment(const Field2D& hu, const Mask2D& g, const AugmentConfig& config,
                  std::uint64_t seed) {
  return augment(hu, g, sample_augment(config, seed));
}

}  // namespace voxprompt::net

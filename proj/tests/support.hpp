#pragma once

#include <random>

#include "voxprompt/mask.hpp"
#include "voxprompt/volume_io.hpp"

namespace vt {

using namespace voxprompt;

inline Mask2D square(int h, int w, int r0, int c0, int side) {
  Mask2D m(h, w);
  for (int r = r0; r < r0 + side; ++r)
    for (int c = c0; c < c0 + side; ++c) m.set(r, c);
  return m;
}

inline Mask2D random_mask(int h, int w, double density, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::bernoulli_distribution b(density);
  Mask2D m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, b(g));
  return m;
}

// Sphere phantom without noise, 24x40x40.
inline Phantom ball(double radius = 8.0) {
  PhantomSpec s;
  s.dims = {24, 40, 40};
  s.spacing = {1, 1, 1};
  s.shape.center = {11.5, 19.5, 19.5};
  s.shape.radii = {radius, radius, radius};
  s.noise_sigma = 0;
  return phantom_generate(s);
}

}  // namespace vt

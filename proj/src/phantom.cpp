#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "voxprompt/rng.hpp"
#include "voxprompt/volume_io.hpp"

namespace voxprompt {

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::ellipsoid: return "ellipsoid";
    case ShapeKind::torus: return "torus";
    case ShapeKind::blob_union: return "blob-union";
  }
  return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "ellipsoid") return ShapeKind::ellipsoid;
  if (s == "torus") return ShapeKind::torus;
  if (s == "blob-union" || s == "blob_union") return ShapeKind::blob_union;
  throw std::invalid_argument("unknown shape kind '" + s + "'");
}

ShapeRaster::ShapeRaster(const ShapeSpec& spec) : spec_(spec) {
  for (double r : spec.radii)
    if (!(r > 0)) {
      if (spec.kind == ShapeKind::sphere && spec.radii[0] > 0) break;
      throw std::invalid_argument("shape radii must be > 0");
    }
  if (spec.kind == ShapeKind::torus && spec.radii[1] >= spec.radii[0])
    throw std::invalid_argument("torus tube radius must be below ring radius");
  if (spec.kind == ShapeKind::blob_union) {
    Rng rng(spec.seed, {tag(Stream::phantom), 0xB10B});
    const double mean_r = (spec.radii[0] + spec.radii[1] + spec.radii[2]) / 3.0;
    constexpr int kBlobs = 4;
    for (int i = 0; i < kBlobs; ++i) {
      const double r = std::min({rng.uniform(0.45, 0.65) * mean_r,
                                 spec.radii[0], spec.radii[1], spec.radii[2]});
      // Each blob must overlap an earlier one so the union stays connected
      // and no slice inside its z-extent comes out empty.
      std::array<double, 4> b{};
      b[3] = r;
      bool linked = false;
      for (int attempt = 0; attempt < 64 && !linked; ++attempt) {
        for (int a = 0; a < 3; ++a) {
          const double room = std::max(0.0, spec.radii[a] - r);
          b[a] = spec.center[a] + rng.uniform(-room, room);
        }
        linked = blobs_.empty();
        for (const auto& o : blobs_) {
          const double d = std::hypot(b[0] - o[0], b[1] - o[1], b[2] - o[2]);
          linked = linked || d < 0.7 * (r + o[3]);
        }
      }
      if (!linked) {
        const auto& o = blobs_.back();
        b = {o[0], o[1], o[2], r};
      }
      blobs_.push_back(b);
    }
  }
}

bool ShapeRaster::inside(double z, double y, double x) const {
  const double dz = z - spec_.center[0];
  const double dy0 = y - spec_.center[1];
  const double dx0 = x - spec_.center[2];
  const double th = spec_.rotation_deg * std::numbers::pi / 180.0;
  const double dy = std::cos(th) * dy0 + std::sin(th) * dx0;
  const double dx = -std::sin(th) * dy0 + std::cos(th) * dx0;
  const auto& r = spec_.radii;
  switch (spec_.kind) {
    case ShapeKind::sphere:
      return dz * dz + dy * dy + dx * dx <= r[0] * r[0];
    case ShapeKind::ellipsoid: {
      const double a = dz / r[0], b = dy / r[1], c = dx / r[2];
      return a * a + b * b + c * c <= 1.0;
    }
    case ShapeKind::torus: {
      const double d = std::sqrt(dz * dz + dy * dy) - r[0];
      return d * d + dx * dx <= r[1] * r[1];
    }
    case ShapeKind::blob_union:
      for (const auto& b : blobs_) {
        const double ez = z - b[0], ey = y - b[1], ex = x - b[2];
        if (ez * ez + ey * ey + ex * ex <= b[3] * b[3]) return true;
      }
      return false;
  }
  return false;
}

std::array<std::array<double, 2>, 3> ShapeRaster::extent() const {
  const auto& c = spec_.center;
  const auto& r = spec_.radii;
  const double th = spec_.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::abs(std::cos(th)), sn = std::abs(std::sin(th));
  auto planar = [&](double ry, double rx) {
    return std::array<double, 2>{ry * cs + rx * sn, ry * sn + rx * cs};
  };
  switch (spec_.kind) {
    case ShapeKind::sphere:
      return {{{c[0] - r[0], c[0] + r[0]},
               {c[1] - r[0], c[1] + r[0]},
               {c[2] - r[0], c[2] + r[0]}}};
    case ShapeKind::ellipsoid: {
      const auto p = planar(r[1], r[2]);
      return {{{c[0] - r[0], c[0] + r[0]},
               {c[1] - p[0], c[1] + p[0]},
               {c[2] - p[1], c[2] + p[1]}}};
    }
    case ShapeKind::torus: {
      const double outer = r[0] + r[1];
      const auto p = planar(outer, r[1]);
      return {{{c[0] - outer, c[0] + outer},
               {c[1] - p[0], c[1] + p[0]},
               {c[2] - p[1], c[2] + p[1]}}};
    }
    case ShapeKind::blob_union: {
      std::array<std::array<double, 2>, 3> e{{{1e9, -1e9}, {1e9, -1e9}, {1e9, -1e9}}};
      for (const auto& b : blobs_)
        for (int a = 0; a < 3; ++a) {
          e[a][0] = std::min(e[a][0], b[a] - b[3]);
          e[a][1] = std::max(e[a][1], b[a] + b[3]);
        }
      return e;
    }
  }
  return {};
}

namespace {

void check_fits(const ShapeRaster& raster, const Dims& d) {
  const auto e = raster.extent();
  const int lim[3] = {d.z, d.y, d.x};
  for (int a = 0; a < 3; ++a)
    if (e[a][0] < -0.5 || e[a][1] > lim[a] - 0.5)
      throw std::invalid_argument(
          "shape exceeds volume bounds along axis " + std::to_string(a) +
          " (extent " + std::to_string(e[a][0]) + ".." +
          std::to_string(e[a][1]) + ", size " + std::to_string(lim[a]) + ")");
}

// Rasterizes a shape over its bounding box; calls fn(z, y, x) per voxel inside.
template <class Fn>
void rasterize(const ShapeRaster& raster, const Dims& d, Fn&& fn) {
  const auto e = raster.extent();
  const int z0 = std::max(0, static_cast<int>(std::floor(e[0][0])));
  const int z1 = std::min(d.z - 1, static_cast<int>(std::ceil(e[0][1])));
  const int y0 = std::max(0, static_cast<int>(std::floor(e[1][0])));
  const int y1 = std::min(d.y - 1, static_cast<int>(std::ceil(e[1][1])));
  const int x0 = std::max(0, static_cast<int>(std::floor(e[2][0])));
  const int x1 = std::min(d.x - 1, static_cast<int>(std::ceil(e[2][1])));
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (raster.inside(z, y, x)) fn(z, y, x);
}

int occupied_slices(const LabelVolume& labels, std::int32_t class_id) {
  int n = 0;
  const auto& d = labels.dims();
  for (int z = 0; z < d.z; ++z) {
    bool any = false;
    for (int y = 0; y < d.y && !any; ++y)
      for (int x = 0; x < d.x && !any; ++x) any = labels(z, y, x) == class_id;
    n += any ? 1 : 0;
  }
  return n;
}

void add_noise(Volume& v, double sigma, std::uint64_t seed) {
  if (sigma <= 0) return;
  Rng rng(seed, {tag(Stream::phantom), 0x401CE});
  std::normal_distribution<float> n(0.0f, static_cast<float>(sigma));
  for (auto& x : v.voxels()) x += n(rng.engine());
}

}  // namespace

Phantom phantom_generate(const PhantomSpec& spec) {
  const ShapeRaster raster(spec.shape);
  check_fits(raster, spec.dims);
  Phantom p{Volume(spec.dims, spec.spacing,
                   static_cast<float>(spec.background_hu)),
            LabelVolume(spec.dims, spec.spacing)};
  const auto inside_hu =
      static_cast<float>(spec.background_hu + spec.contrast_hu);
  rasterize(raster, spec.dims, [&](int z, int y, int x) {
    p.volume(z, y, x) = inside_hu;
    p.labels(z, y, x) = 1;
  });
  if (occupied_slices(p.labels, 1) < 3)
    throw std::invalid_argument("phantom object must span at least 3 slices");
  add_noise(p.volume, spec.noise_sigma, spec.seed);
  return p;
}

Phantom scene_generate(const SceneSpec& spec) {
  const auto& d = spec.dims;
  Phantom p{Volume(d, spec.spacing, static_cast<float>(spec.air_hu)),
            LabelVolume(d, spec.spacing)};
  const double cy = (d.y - 1) / 2.0, cx = (d.x - 1) / 2.0;
  const bool body = spec.body_radii[0] > 0 && spec.body_radii[1] > 0;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        if (!body) {
          p.volume(z, y, x) = static_cast<float>(spec.body_hu);
          continue;
        }
        const double a = (y - cy) / spec.body_radii[0];
        const double b = (x - cx) / spec.body_radii[1];
        if (a * a + b * b <= 1.0) p.volume(z, y, x) = static_cast<float>(spec.body_hu);
      }
  for (const auto& obj : spec.objects) {
    const ShapeRaster raster(obj.shape);
    check_fits(raster, d);
    rasterize(raster, d, [&](int z, int y, int x) {
      p.volume(z, y, x) = static_cast<float>(obj.hu);
      p.labels(z, y, x) = obj.class_id;
    });
  }
  add_noise(p.volume, spec.noise_sigma, spec.seed);
  return p;
}

namespace {

struct Placed {
  std::array<std::array<double, 2>, 3> extent;
};

bool overlaps(const std::array<std::array<double, 2>, 3>& a,
              const std::array<std::array<double, 2>, 3>& b, double gap) {
  for (int k = 0; k < 3; ++k)
    if (a[k][1] + gap < b[k][0] || b[k][1] + gap < a[k][0]) return false;
  return true;
}

}  // namespace

SceneSpec random_scene(Dims dims, std::uint64_t seed) {
  if (dims.z < 16 || dims.y < 48 || dims.x < 48)
    throw std::invalid_argument(
        "random_scene: dims too small for the phantom shapes (need at least "
        "16x48x48)");
  Rng rng(seed, {tag(Stream::phantom)});
  SceneSpec s;
  s.dims = dims;
  s.seed = seed;
  s.body_hu = rng.uniform(0.0, 30.0);
  s.noise_sigma = rng.uniform(10.0, 20.0);
  s.body_radii = {0.44 * dims.y, 0.47 * dims.x};
  const double cy = (dims.y - 1) / 2.0, cx = (dims.x - 1) / 2.0;
  const double zs = dims.z / 32.0;  // shape sizes follow the slice count
  const double ys = dims.y / 64.0;

  std::vector<Placed> placed;
  // Unlabelled distractors first: a bright spine and a vessel of organ-like HU.
  {
    SceneObject spine;
    spine.class_id = 0;
    spine.hu = rng.uniform(350.0, 500.0);
    spine.shape.kind = ShapeKind::ellipsoid;
    spine.shape.radii = {dims.z / 2.0 + 2.0, 4.0 * ys, 4.5 * ys};
    spine.shape.center = {(dims.z - 1) / 2.0, cy + 0.30 * dims.y, cx};
    // Runs through every slice; clipped to the volume by construction.
    spine.shape.radii[0] = (dims.z - 1) / 2.0 + 0.49;
    s.objects.push_back(spine);
    placed.push_back({ShapeRaster(spine.shape).extent()});
  }
  auto try_place = [&](SceneObject obj, auto&& propose) -> bool {
    for (int attempt = 0; attempt < 200; ++attempt) {
      propose(obj);
      try {
        const ShapeRaster raster(obj.shape);
        const auto e = raster.extent();
        if (e[0][0] < 0.5 || e[0][1] > dims.z - 1.5) continue;
        if (e[1][0] < 1 || e[1][1] > dims.y - 2 || e[2][0] < 1 || e[2][1] > dims.x - 2)
          continue;
        // Stay inside the body outline.
        bool in_body = true;
        for (double yy : {e[1][0], e[1][1]})
          for (double xx : {e[2][0], e[2][1]}) {
            const double a = (yy - cy) / s.body_radii[0];
            const double b = (xx - cx) / s.body_radii[1];
            if (a * a + b * b > 1.0) in_body = false;
          }
        if (!in_body) continue;
        bool clash = false;
        for (const auto& p : placed) clash = clash || overlaps(p.extent, e, 1.0);
        if (clash) continue;
        placed.push_back({e});
        s.objects.push_back(obj);
        return true;
      } catch (const std::invalid_argument&) {
        continue;
      }
    }
    return false;
  };

  const double organ_lo = 90.0, organ_hi = 170.0;
  // Vessel: a tall unlabelled ellipsoid with organ-like HU.
  {
    SceneObject vessel;
    vessel.class_id = 0;
    vessel.hu = rng.uniform(organ_lo, organ_hi);
    try_place(vessel, [&](SceneObject& o) {
      o.shape.kind = ShapeKind::ellipsoid;
      o.shape.radii = {rng.uniform(10.0, 13.0) * zs, rng.uniform(2.5, 3.5) * ys,
                       rng.uniform(2.5, 3.5) * ys};
      o.shape.center = {(dims.z - 1) / 2.0 + rng.uniform(-2.0, 2.0),
                        cy + rng.uniform(-0.05, 0.2) * dims.y,
                        cx + rng.uniform(-0.1, 0.1) * dims.x};
    });
  }
  // Class 1: large ellipsoid (liver-like).
  {
    SceneObject o1;
    o1.class_id = 1;
    o1.hu = rng.uniform(organ_lo, organ_hi);
    try_place(o1, [&](SceneObject& o) {
      o.shape.kind = ShapeKind::ellipsoid;
      o.shape.radii = {rng.uniform(7.0, 10.0) * zs, rng.uniform(8.0, 12.0) * ys,
                       rng.uniform(9.0, 13.0) * ys};
      o.shape.rotation_deg = rng.uniform(-30.0, 30.0);
      o.shape.center = {(dims.z - 1) / 2.0 + rng.uniform(-3.0, 3.0) * zs,
                        cy + rng.uniform(-0.25, 0.15) * dims.y,
                        cx + rng.uniform(-0.25, 0.25) * dims.x};
    });
  }
  // Class 2: lobulated blob union (kidney-like).
  {
    SceneObject o2;
    o2.class_id = 2;
    o2.hu = rng.uniform(organ_lo, organ_hi);
    try_place(o2, [&](SceneObject& o) {
      o.shape.kind = ShapeKind::blob_union;
      o.shape.radii = {rng.uniform(5.0, 7.0) * zs, rng.uniform(5.0, 8.0) * ys,
                       rng.uniform(5.0, 8.0) * ys};
      o.shape.seed = rng.next();
      o.shape.center = {(dims.z - 1) / 2.0 + rng.uniform(-5.0, 5.0) * zs,
                        cy + rng.uniform(-0.3, 0.25) * dims.y,
                        cx + rng.uniform(-0.3, 0.3) * dims.x};
    });
  }
  // Class 3: ring (bowel-loop-like) standing in the z-y plane.
  {
    SceneObject o3;
    o3.class_id = 3;
    o3.hu = rng.uniform(organ_lo, organ_hi);
    try_place(o3, [&](SceneObject& o) {
      o.shape.kind = ShapeKind::torus;
      const double ring = rng.uniform(6.0, 8.0) * zs;
      o.shape.radii = {ring, rng.uniform(2.2, 3.0) * ys, 1.0};
      o.shape.rotation_deg = rng.uniform(-40.0, 40.0);
      o.shape.center = {(dims.z - 1) / 2.0 + rng.uniform(-3.0, 3.0) * zs,
                        cy + rng.uniform(-0.3, 0.25) * dims.y,
                        cx + rng.uniform(-0.3, 0.3) * dims.x};
    });
  }
  return s;
}

}  // namespace voxprompt

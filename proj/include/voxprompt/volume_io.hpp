#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxprompt/mask.hpp"

namespace voxprompt {

// (slices, rows, cols); the slice axis is the NIfTI k axis.
struct Dims {
  int z = 0;
  int y = 0;
  int x = 0;
  std::size_t voxels() const {
    return static_cast<std::size_t>(z) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(x);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

// Millimetres, (dz, dy, dx). Volumes keep float32 precision, as on disk.
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

// 2D scalar field, row-major.
struct Field2D {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Field2D() = default;
  Field2D(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  float operator()(int r, int c) const {
    return values[static_cast<std::size_t>(r) * width + c];
  }
  float& operator()(int r, int c) {
    return values[static_cast<std::size_t>(r) * width + c];
  }
};

// CT volume in Hounsfield units.
class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, float fill = 0.0f);
  Volume(Dims dims, Spacing spacing, std::vector<float> voxels);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> voxels() const { return voxels_; }
  std::span<float> voxels() { return voxels_; }

  float operator()(int z, int y, int x) const { return voxels_[index(z, y, x)]; }
  float& operator()(int z, int y, int x) { return voxels_[index(z, y, x)]; }

  Field2D slice(int z) const;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims_.y + y) * dims_.x + x;
  }
  Dims dims_;
  Spacing spacing_;
  std::vector<float> voxels_;
};

// Integer labels paired with a Volume; 0 is background.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Dims dims, Spacing spacing);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::int32_t> labels() const { return labels_; }
  std::span<std::int32_t> labels() { return labels_; }

  std::int32_t operator()(int z, int y, int x) const {
    return labels_[(static_cast<std::size_t>(z) * dims_.y + y) * dims_.x + x];
  }
  std::int32_t& operator()(int z, int y, int x) {
    return labels_[(static_cast<std::size_t>(z) * dims_.y + y) * dims_.x + x];
  }

  Mask3D class_mask(std::int32_t class_id) const;
  std::vector<std::int32_t> present_classes() const;

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::int32_t> labels_;
};

// ---------------------------------------------------------------- NIfTI-1

enum class NiftiDatatype : std::int16_t { int16 = 4, float32 = 16 };

struct NiftiHeader {
  std::array<std::int16_t, 8> dim{};
  std::array<float, 8> pixdim{};
  NiftiDatatype datatype = NiftiDatatype::float32;
  std::int16_t bitpix = 32;
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::string descrip;
};

struct NiftiImage {
  Volume volume;
  NiftiHeader header;
};

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kNiftiDataOffset = 352;  // header + 4-byte extension flag

// Single-file, uncompressed, little-endian NIfTI-1 with int16/float32 data.
NiftiImage parse_nifti(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_nifti(const Volume& volume);

// Labels are stored as int16.
LabelVolume parse_nifti_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_nifti_labels(const LabelVolume& labels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

// ----------------------------------------------------------- preprocessing

struct WindowSpec {
  double lo = -500.0;
  double hi = 1000.0;
};

void validate(const WindowSpec& w);
float window_value(float hu, const WindowSpec& w);
Volume window_normalize(const Volume& volume, const WindowSpec& window);
Field2D window_normalize(const Field2D& hu, const WindowSpec& window);

// Maps between a source slice grid and the padded square model grid.
// Pixel centres: model = (src + 0.5) * scale - 0.5 + pad.
struct PadInfo {
  int target = 0;  // side of the square model grid
  int source_height = 0;
  int source_width = 0;
  int content_height = 0;
  int content_width = 0;
  int pad_top = 0;
  int pad_left = 0;

  double scale_rows() const {
    return static_cast<double>(content_height) / source_height;
  }
  double scale_cols() const {
    return static_cast<double>(content_width) / source_width;
  }
  std::array<double, 2> to_model(double row, double col) const;
  std::array<double, 2> to_source(double row, double col) const;
  Point to_model(Point p) const;
  Point to_source(Point p) const;
  Box to_model(const Box& b) const;
  Box to_source(const Box& b) const;
};

struct SliceImage {
  Field2D pixels;  // values in [0, 1]
  PadInfo pad;
};

PadInfo make_pad_info(int source_height, int source_width, int target);
SliceImage resize_pad(const Field2D& slice, int target);
Mask2D resize_pad_mask(const Mask2D& mask, const PadInfo& pad);
Mask2D unpad_mask(const Mask2D& model_mask, const PadInfo& pad);

bool keep_slice(const Mask2D& label_slice, std::size_t min_pixels = 15);

// --------------------------------------------------------------- phantoms

enum class ShapeKind { sphere, ellipsoid, torus, blob_union };

std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

// Geometry in voxel units, (z, y, x). For a torus the ring lies in the
// z-y plane: radii.z is the ring radius, radii.y the tube radius.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::sphere;
  std::array<double, 3> center{};
  std::array<double, 3> radii{};
  double rotation_deg = 0.0;  // in-plane rotation about the slice axis
  std::uint64_t seed = 0;     // blob placement for blob_union
};

struct PhantomSpec {
  Dims dims{32, 64, 64};
  Spacing spacing{2.5, 0.8, 0.8};
  ShapeSpec shape;
  double background_hu = 40.0;
  double contrast_hu = 120.0;
  double noise_sigma = 15.0;
  std::uint64_t seed = 0;
};

struct Phantom {
  Volume volume;
  LabelVolume labels;
};

// Voxel-centre membership test.
class ShapeRaster {
 public:
  explicit ShapeRaster(const ShapeSpec& spec);
  bool inside(double z, double y, double x) const;
  // Conservative axis-aligned extent, (lo, hi) per axis.
  std::array<std::array<double, 2>, 3> extent() const;

 private:
  ShapeSpec spec_;
  std::vector<std::array<double, 4>> blobs_;  // (z, y, x, r)
};

Phantom phantom_generate(const PhantomSpec& spec);

struct SceneObject {
  std::int32_t class_id = 1;
  ShapeSpec shape;
  double hu = 120.0;
};

// Multi-object scene inside an elliptical body outline surrounded by air.
struct SceneSpec {
  Dims dims{32, 64, 64};
  Spacing spacing{2.5, 0.8, 0.8};
  double air_hu = -1000.0;
  double body_hu = 20.0;
  std::array<double, 2> body_radii{0.0, 0.0};  // (y, x); 0 = no body outline
  std::vector<SceneObject> objects;
  double noise_sigma = 15.0;
  std::uint64_t seed = 0;
};

Phantom scene_generate(const SceneSpec& spec);

// The synthetic abdomen-like layout used for the bundled dataset.
SceneSpec random_scene(Dims dims, std::uint64_t seed);

// ---------------------------------------------------------------- manifest

struct ManifestEntry {
  std::filesystem::path volume_path;
  std::filesystem::path label_path;
  std::vector<std::int32_t> class_ids;
};

// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

}  // namespace voxprompt

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "voxprompt/volume_io.hpp"

namespace voxprompt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "NIfTI I/O assumes a little-endian host");

// Field offsets in the 348-byte NIfTI-1 header.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffRegular = 38;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffDescrip = 148;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrowX = 280;
constexpr std::size_t kOffMagic = 344;

template <class T>
T load(std::span<const std::uint8_t> b, std::size_t off) {
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  return v;
}

template <class T>
void store(std::vector<std::uint8_t>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof(T));
}

std::int32_t byteswap32(std::int32_t v) {
  auto u = static_cast<std::uint32_t>(v);
  u = (u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24);
  return static_cast<std::int32_t>(u);
}

struct RawNifti {
  NiftiHeader header;
  Dims dims;
  Spacing spacing;
  std::span<const std::uint8_t> data;
};

RawNifti parse_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNiftiHeaderSize)
    throw LengthError("nifti: file has " + std::to_string(bytes.size()) +
                      " bytes, header needs 348");
  const auto sizeof_hdr = load<std::int32_t>(bytes, kOffSizeofHdr);
  if (sizeof_hdr != 348) {
    if (byteswap32(sizeof_hdr) == 348)
      throw UnsupportedError("sizeof_hdr: big-endian files are not supported");
    throw FormatError("sizeof_hdr: expected 348, got " +
                      std::to_string(sizeof_hdr));
  }
  const char* magic = reinterpret_cast<const char*>(bytes.data() + kOffMagic);
  if (std::memcmp(magic, "ni1\0", 4) == 0)
    throw UnsupportedError(
        "magic: two-file NIfTI (ni1) is not supported, expected n+1");
  if (std::memcmp(magic, "n+1\0", 4) != 0) {
    std::string got;
    for (int i = 0; i < 3; ++i) {
      const char ch = magic[i];
      got += (ch >= 32 && ch < 127) ? ch : '?';
    }
    throw FormatError("magic: expected 'n+1', got '" + got + "'");
  }

  RawNifti raw;
  auto& h = raw.header;
  for (int i = 0; i < 8; ++i) {
    h.dim[i] = load<std::int16_t>(bytes, kOffDim + 2 * i);
    h.pixdim[i] = load<float>(bytes, kOffPixdim + 4 * i);
  }
  if (h.dim[0] < 3 || h.dim[0] > 7)
    throw UnsupportedError("dim[0]: expected 3 spatial dimensions, got " +
                           std::to_string(h.dim[0]));
  for (int i = 4; i <= h.dim[0]; ++i)
    if (h.dim[i] > 1)
      throw UnsupportedError("dim[" + std::to_string(i) +
                             "]: only single-frame 3D images are supported");
  for (int i = 1; i <= 3; ++i)
    if (h.dim[i] < 1)
      throw FormatError("dim[" + std::to_string(i) + "]: must be >= 1, got " +
                        std::to_string(h.dim[i]));
  for (int i = 1; i <= 3; ++i)
    if (!(h.pixdim[i] > 0.0f) || !std::isfinite(h.pixdim[i]))
      throw FormatError("pixdim[" + std::to_string(i) + "]: must be positive");

  const auto datatype = load<std::int16_t>(bytes, kOffDatatype);
  if (datatype == static_cast<std::int16_t>(NiftiDatatype::int16))
    h.datatype = NiftiDatatype::int16;
  else if (datatype == static_cast<std::int16_t>(NiftiDatatype::float32))
    h.datatype = NiftiDatatype::float32;
  else
    throw UnsupportedError("datatype: " + std::to_string(datatype) +
                           " not supported (int16=4, float32=16)");
  h.bitpix = load<std::int16_t>(bytes, kOffBitpix);
  h.vox_offset = load<float>(bytes, kOffVoxOffset);
  h.scl_slope = load<float>(bytes, kOffSclSlope);
  h.scl_inter = load<float>(bytes, kOffSclInter);
  const char* desc = reinterpret_cast<const char*>(bytes.data() + kOffDescrip);
  h.descrip.assign(desc, strnlen(desc, 80));

  if (!(h.vox_offset >= static_cast<float>(kNiftiHeaderSize)))
    throw FormatError("vox_offset: must be >= 348 for single-file NIfTI");

  raw.dims = {h.dim[3], h.dim[2], h.dim[1]};
  raw.spacing = {h.pixdim[3], h.pixdim[2], h.pixdim[1]};
  const std::size_t elem = h.datatype == NiftiDatatype::int16 ? 2 : 4;
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  const std::size_t need = raw.dims.voxels() * elem;
  if (bytes.size() < offset || bytes.size() - offset < need)
    throw LengthError("data: expected " + std::to_string(need) +
                      " bytes at offset " + std::to_string(offset) + ", have " +
                      std::to_string(bytes.size() > offset ? bytes.size() - offset
                                                           : 0));
  raw.data = bytes.subspan(offset, need);
  return raw;
}

std::vector<std::uint8_t> header_bytes(Dims dims, Spacing sp,
                                       NiftiDatatype type, float slope,
                                       float inter) {
  std::vector<std::uint8_t> b(kNiftiDataOffset, 0);
  store<std::int32_t>(b, kOffSizeofHdr, 348);
  b[kOffRegular] = 'r';
  const std::int16_t dim[8] = {3,
                               static_cast<std::int16_t>(dims.x),
                               static_cast<std::int16_t>(dims.y),
                               static_cast<std::int16_t>(dims.z),
                               1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(b, kOffDim + 2 * i, dim[i]);
  store<std::int16_t>(b, kOffDatatype, static_cast<std::int16_t>(type));
  store<std::int16_t>(b, kOffBitpix, type == NiftiDatatype::int16 ? 16 : 32);
  const float pixdim[8] = {1.0f,
                           static_cast<float>(sp.x),
                           static_cast<float>(sp.y),
                           static_cast<float>(sp.z),
                           0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) store<float>(b, kOffPixdim + 4 * i, pixdim[i]);
  store<float>(b, kOffVoxOffset, static_cast<float>(kNiftiDataOffset));
  store<float>(b, kOffSclSlope, slope);
  store<float>(b, kOffSclInter, inter);
  b[kOffXyztUnits] = 2;  // millimetres
  const char desc[] = "voxprompt";
  std::memcpy(b.data() + kOffDescrip, desc, sizeof(desc) - 1);
  store<std::int16_t>(b, kOffQformCode, 0);
  store<std::int16_t>(b, kOffSformCode, 1);
  const float srow[12] = {pixdim[1], 0, 0, 0, 0, pixdim[2], 0, 0,
                          0,         0, pixdim[3], 0};
  for (int i = 0; i < 12; ++i) store<float>(b, kOffSrowX + 4 * i, srow[i]);
  std::memcpy(b.data() + kOffMagic, "n+1\0", 4);
  return b;
}

void check_dims_fit(const Dims& d) {
  if (d.x < 1 || d.y < 1 || d.z < 1 || d.x > 32767 || d.y > 32767 ||
      d.z > 32767)
    throw UnsupportedError("dim: extents must be in [1, 32767]");
}

}  // namespace

NiftiImage parse_nifti(std::span<const std::uint8_t> bytes) {
  const RawNifti raw = parse_raw(bytes);
  std::vector<float> vox(raw.dims.voxels());
  const auto& h = raw.header;
  const bool identity =
      h.scl_slope == 0.0f || (h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  const float slope = h.scl_slope;
  const float inter = h.scl_inter;
  if (h.datatype == NiftiDatatype::float32) {
    std::memcpy(vox.data(), raw.data.data(), vox.size() * sizeof(float));
    if (!identity)
      for (auto& v : vox) v = v * slope + inter;
  } else {
    for (std::size_t i = 0; i < vox.size(); ++i) {
      const auto r = load<std::int16_t>(raw.data, 2 * i);
      vox[i] = identity ? static_cast<float>(r)
                        : static_cast<float>(r) * slope + inter;
    }
  }
  return {Volume(raw.dims, raw.spacing, std::move(vox)), h};
}

std::vector<std::uint8_t> write_nifti(const Volume& volume) {
  check_dims_fit(volume.dims());
  auto b = header_bytes(volume.dims(), volume.spacing(), NiftiDatatype::float32,
                        1.0f, 0.0f);
  const auto vox = volume.voxels();
  const std::size_t off = b.size();
  b.resize(off + vox.size() * sizeof(float));
  std::memcpy(b.data() + off, vox.data(), vox.size() * sizeof(float));
  return b;
}

LabelVolume parse_nifti_labels(std::span<const std::uint8_t> bytes) {
  const NiftiImage img = parse_nifti(bytes);
  LabelVolume labels(img.volume.dims(), img.volume.spacing());
  const auto vox = img.volume.voxels();
  for (std::size_t i = 0; i < vox.size(); ++i) {
    const auto v = static_cast<std::int32_t>(std::lround(vox[i]));
    if (v < 0) throw FormatError("labels: negative label value");
    labels.labels()[i] = v;
  }
  return labels;
}

std::vector<std::uint8_t> write_nifti_labels(const LabelVolume& labels) {
  check_dims_fit(labels.dims());
  auto b = header_bytes(labels.dims(), labels.spacing(), NiftiDatatype::int16,
                        0.0f, 0.0f);
  const auto lab = labels.labels();
  const std::size_t off = b.size();
  b.resize(off + lab.size() * 2);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    if (lab[i] < 0 || lab[i] > 32767)
      throw UnsupportedError("labels: value out of int16 range");
    store<std::int16_t>(b, off + 2 * i, static_cast<std::int16_t>(lab[i]));
  }
  return b;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  return {s.begin(), s.end()};
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace voxprompt

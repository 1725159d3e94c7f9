#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "voxprompt/net/tensor.hpp"

namespace voxprompt::net {

inline constexpr char kCheckpointMagic[8] = {'V', 'O', 'X', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct AdamState {
  std::uint64_t t = 0;
  std::vector<float> m, v;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  ParamStore<float> params;
  std::optional<AdamState> adam;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

// Layout (little-endian):
//   "VOXPCKPT" u32 version | u32 meta_len, meta JSON | u32 tensor count
//   per tensor: u16 name_len, name, u8 ndim, u32 dims[ndim], u64 offset, u64 count
//   float32 data; offsets count elements from the start of the data block.
std::vector<std::uint8_t> save_checkpoint(const Checkpoint& ckpt);

// With `expected`, every tensor is checked against the layout that config
// implies and the first mismatch is reported by name.
Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes,
                           const ModelConfig* expected = nullptr);

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

}  // namespace voxprompt::net

#include "voxprompt/net/checkpoint.hpp"

#include <cstring>

#include "voxprompt/net/unet.hpp"
#include "voxprompt/volume_io.hpp"

namespace voxprompt::net {

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"image_size", c.image_size},
          {"low_res", c.low_res},
          {"widths", c.widths},
          {"num_masks", c.num_masks},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.image_size = j.at("image_size").get<int>();
    c.low_res = j.at("low_res").get<int>();
    c.widths = j.at("widths").get<std::array<int, 4>>();
    c.num_masks = j.at("num_masks").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  return c;
}

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto at = buf.size();
    buf.resize(at + sizeof(T));
    std::memcpy(buf.data() + at, &v, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size())
      throw LengthError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta = {{"config", config_to_json(ckpt.config)}, {"step", ckpt.step}};
  if (ckpt.adam) meta["adam_t"] = ckpt.adam->t;
  const std::string meta_s = meta.dump();

  struct Item {
    std::string name;
    std::vector<int> shape;
    const float* data;
    std::size_t count;
  };
  std::vector<Item> items;
  for (const auto& e : ckpt.params.entries)
    items.push_back({e.name, e.shape, ckpt.params.values.data() + e.offset, e.count});
  if (ckpt.adam) {
    const int n = static_cast<int>(ckpt.adam->m.size());
    items.push_back({"adam.m", {n}, ckpt.adam->m.data(), ckpt.adam->m.size()});
    items.push_back({"adam.v", {n}, ckpt.adam->v.data(), ckpt.adam->v.size()});
  }

  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta_s.size()));
  w.bytes(meta_s.data(), meta_s.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(items.size()));
  std::uint64_t offset = 0;
  for (const auto& it : items) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(it.name.size()));
    w.bytes(it.name.data(), it.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(it.shape.size()));
    for (int d : it.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(it.count);
    offset += it.count;
  }
  for (const auto& it : items) w.bytes(it.data, it.count * sizeof(float));
  return std::move(w.buf);
}

Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes,
                           const ModelConfig* expected) {
  Reader r(bytes);
  const auto magic = r.take(sizeof kCheckpointMagic);
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw FormatError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw UnsupportedError("checkpoint: version " + std::to_string(version) +
                           ", expected " + std::to_string(kCheckpointVersion));
  const auto meta_len = r.get<std::uint32_t>();
  const auto meta_b = r.take(meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_b.begin(), meta_b.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  Checkpoint ck;
  ck.config = config_from_json(meta.at("config"));
  ck.step = meta.value("step", std::uint64_t{0});

  struct Item {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset, count;
  };
  const auto n = r.get<std::uint32_t>();
  std::vector<Item> items;
  for (std::uint32_t i = 0; i < n; ++i) {
    Item it;
    const auto len = r.get<std::uint16_t>();
    const auto name = r.take(len);
    it.name.assign(name.begin(), name.end());
    const auto ndim = r.get<std::uint8_t>();
    std::uint64_t prod = 1;
    for (int d = 0; d < ndim; ++d) {
      it.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
      prod *= static_cast<std::uint64_t>(it.shape.back());
    }
    it.offset = r.get<std::uint64_t>();
    it.count = r.get<std::uint64_t>();
    if (prod != it.count)
      throw FormatError("checkpoint: tensor '" + it.name + "' count disagrees with shape");
    items.push_back(std::move(it));
  }
  const std::size_t data_start = r.pos();
  auto data = bytes.subspan(data_start);
  auto read_floats = [&](const Item& it) {
    if ((it.offset + it.count) * sizeof(float) > data.size())
      throw LengthError("checkpoint truncated inside tensor '" + it.name + "'");
    std::vector<float> v(it.count);
    std::memcpy(v.data(), data.data() + it.offset * sizeof(float), it.count * sizeof(float));
    return v;
  };

  const ModelConfig& layout_cfg = expected ? *expected : ck.config;
  UNet<float> reference_layout(layout_cfg);
  const auto& want = reference_layout.params().entries;
  ck.params = ParamStore<float>{};
  for (const auto& we : want) {
    const Item* found = nullptr;
    for (const auto& it : items)
      if (it.name == we.name) found = &it;
    if (!found) throw ShapeError("checkpoint: tensor '" + we.name + "' missing");
    if (found->shape != we.shape)
      throw ShapeError("checkpoint: tensor '" + we.name + "' has shape " +
                       shape_str(found->shape) + ", model expects " + shape_str(we.shape));
    ck.params.add(we.name, we.shape);
    const auto v = read_floats(*found);
    std::copy(v.begin(), v.end(), ck.params.values.begin() + ck.params.entries.back().offset);
  }
  const Item* m = nullptr;
  const Item* v = nullptr;
  for (const auto& it : items) {
    if (it.name == "adam.m") m = &it;
    if (it.name == "adam.v") v = &it;
  }
  if (m && v) {
    ck.adam = AdamState{meta.value("adam_t", std::uint64_t{0}), read_floats(*m), read_floats(*v)};
  }
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return load_checkpoint(bytes);
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, save_checkpoint(ckpt));
}

}  // namespace voxprompt::net

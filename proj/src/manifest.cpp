#include <fstream>

#include "json.hpp"
#include "voxprompt/volume_io.hpp"

namespace voxprompt {

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError("manifest: top level must be a list");
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("volume_path") ||
        !e.contains("label_path") || !e.contains("class_ids"))
      throw FormatError(
          "manifest: entries need volume_path, label_path and class_ids");
    ManifestEntry m;
    try {
      m.volume_path = e.at("volume_path").get<std::string>();
      m.label_path = e.at("label_path").get<std::string>();
      m.class_ids = e.at("class_ids").get<std::vector<std::int32_t>>();
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("manifest: ") + ex.what());
    }
    if (m.volume_path.is_relative()) m.volume_path = base / m.volume_path;
    if (m.label_path.is_relative()) m.label_path = base / m.label_path;
    out.push_back(std::move(m));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  const auto base = path.parent_path();
  for (const auto& e : entries) {
    auto rel = [&](const std::filesystem::path& p) {
      return p.is_absolute() ? p.lexically_relative(base).generic_string()
                             : p.generic_string();
    };
    j.push_back({{"volume_path", rel(e.volume_path)},
                 {"label_path", rel(e.label_path)},
                 {"class_ids", e.class_ids}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace voxprompt

#pragma once

// Fills CLI11 options that were not given on the command line from a flat
// TOML table whose keys are the long flag names (dashes or underscores).

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <toml.hpp>

namespace voxprompt::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string toml_scalar(const toml::node& n, const std::string& key) {
  if (const auto* v = n.as_boolean()) return v->get() ? "true" : "false";
  if (const auto* v = n.as_string()) return v->get();
  if (const auto* v = n.as_integer()) return std::to_string(v->get());
  if (const auto* v = n.as_floating_point()) {
    std::ostringstream os;
    os.precision(17);
    os << v->get();
    return os.str();
  }
  throw ConfigError("config key '" + key + "' has an unsupported value type");
}

inline void apply_config_file(CLI::App& app, const std::filesystem::path& path) {
  toml::table tbl;
  try {
    tbl = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + std::string(e.description()));
  }
  for (const auto& [k, node] : tbl) {
    std::string key(k.str());
    std::string flag = key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + flag);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError("config " + path.string() + ": unknown key '" + key + "'");
    }
    if (flag == "config") throw ConfigError("config files cannot nest");
    if (opt->count() > 0) continue;  // the command line wins
    std::vector<std::string> values;
    if (const auto* arr = node.as_array()) {
      for (const auto& el : *arr) values.push_back(toml_scalar(el, key));
    } else {
      values.push_back(toml_scalar(node, key));
    }
    if (opt->get_expected_max() == 0) {
      // Flags: only `true` switches them on.
      if (values.size() != 1 || (values[0] != "true" && values[0] != "false"))
        throw ConfigError("config key '" + key + "' must be true or false");
      if (values[0] == "false") continue;
      values = {"true"};
    }
    try {
      opt->add_result(values);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

}  // namespace voxprompt::cli

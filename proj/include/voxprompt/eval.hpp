#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxprompt/propagate.hpp"

namespace voxprompt {

// 2|M and G| / (|M| + |G|); 1 when both are empty.
double dice3d(const Mask3D& m, const Mask3D& g);

enum class Protocol { volume, slice };
enum class InitialPrompt { point, box };
std::string to_string(Protocol p);
std::string to_string(InitialPrompt p);
Protocol protocol_from_string(const std::string& s);
InitialPrompt initial_prompt_from_string(const std::string& s);

struct BenchmarkConfig {
  Protocol protocol = Protocol::volume;
  InitialPrompt prompt = InitialPrompt::box;
  // Volume protocol: total points per object. Slice protocol: points per slice.
  int edits = 0;
  ForwardingMode mode = ForwardingMode::mask;
  bool oracle = false;  // also score the best secondary mask per slice
  WindowSpec window;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string dataset;  // echoed only

  void validate() const;
};

struct EvalVolume {
  std::string name;
  std::shared_ptr<const Volume> volume;
  LabelVolume labels;
  std::vector<std::int32_t> class_ids;
};

std::vector<EvalVolume> load_eval_set(const std::filesystem::path& manifest);

struct ReportRow {
  std::string volume;
  std::int32_t class_id = 0;
  double dice = 0.0;
  std::optional<double> oracle_dice;
  int prompts = 0;  // initial prompts plus boundary annotations
  int edits_used = 0;
  // Volume protocol: dice after 0..edits_used points.
  std::vector<double> edit_curve;
};

struct Summary {
  std::int32_t class_id = 0;  // 0 = all classes
  std::size_t n = 0;
  double mean = 0.0;
  double ci95 = 0.0;  // half-width
  std::optional<double> oracle_mean;
  std::optional<double> oracle_ci95;
};

// mean and 1.96 * s / sqrt(n) with the sample standard deviation.
std::pair<double, double> mean_ci95(const std::vector<double>& v);

struct BenchmarkReport {
  BenchmarkConfig config;
  std::vector<ReportRow> rows;
  std::vector<Summary> classes;
  Summary overall;
  std::vector<double> edit_curve;  // mean over rows, volume protocol
  std::size_t skipped = 0;         // (volume, class) pairs without foreground
  std::optional<double> runtime_s;
};

BenchmarkReport run_volume_benchmark(const SegmenterFactory& model,
                                     const std::vector<EvalVolume>& data,
                                     const BenchmarkConfig& config);
BenchmarkReport run_slice_benchmark(const SegmenterFactory& model,
                                    const std::vector<EvalVolume>& data,
                                    const BenchmarkConfig& config);
// Slice protocol with both primary and oracle-selected scores.
BenchmarkReport run_oracle_eval(const SegmenterFactory& model,
                                const std::vector<EvalVolume>& data,
                                BenchmarkConfig config);
// Dispatches on config.protocol and config.oracle.
BenchmarkReport run_benchmark(const SegmenterFactory& model,
                              const std::vector<EvalVolume>& data,
                              const BenchmarkConfig& config);

inline constexpr int kReportSchemaVersion = 1;

nlohmann::ordered_json report_json(const BenchmarkReport& r);
std::string emit_report_json(const BenchmarkReport& r);
// Columns: volume,class_id,dice,oracle_dice,prompts,edits_used
std::string emit_report_csv(const BenchmarkReport& r);

}  // namespace voxprompt

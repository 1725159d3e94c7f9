#include "voxprompt/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "voxprompt/rng.hpp"

namespace voxprompt {

double dice3d(const Mask3D& m, const Mask3D& g) {
  if (!m.same_shape(g)) throw ShapeError("dice3d: volumes differ in size");
  std::size_t inter = 0, sm = 0, sg = 0;
  auto a = m.bits(), b = g.bits();
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    sm += a[i];
    sg += b[i];
  }
  if (sm + sg == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sm + sg);
}

std::string to_string(Protocol p) { return p == Protocol::volume ? "volume" : "slice"; }
std::string to_string(InitialPrompt p) { return p == InitialPrompt::point ? "point" : "box"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "volume") return Protocol::volume;
  if (s == "slice") return Protocol::slice;
  throw std::invalid_argument("protocol must be volume or slice, got '" + s + "'");
}

InitialPrompt initial_prompt_from_string(const std::string& s) {
  if (s == "point") return InitialPrompt::point;
  if (s == "box") return InitialPrompt::box;
  throw std::invalid_argument("prompt must be point or box, got '" + s + "'");
}

void BenchmarkConfig::validate() const {
  if (edits < 0) throw std::invalid_argument("edit budget must be >= 0");
  if (mode == ForwardingMode::bbox && protocol != Protocol::volume)
    throw std::invalid_argument("bbox forwarding requires the volume protocol");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  voxprompt::validate(window);
}

std::vector<EvalVolume> load_eval_set(const std::filesystem::path& manifest) {
  std::vector<EvalVolume> out;
  for (const auto& e : read_manifest(manifest)) {
    EvalVolume v;
    v.name = e.volume_path.filename().string();
    auto img = parse_nifti(read_file(e.volume_path));
    v.labels = parse_nifti_labels(read_file(e.label_path));
    if (!(img.volume.dims() == v.labels.dims()))
      throw ShapeError("volume and labels differ in size: " + e.volume_path.string());
    v.volume = std::make_shared<const Volume>(std::move(img.volume));
    v.class_ids = e.class_ids.empty() ? v.labels.present_classes() : e.class_ids;
    out.push_back(std::move(v));
  }
  return out;
}

std::pair<double, double> mean_ci95(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(v.size()))};
}

namespace {

struct Job {
  std::size_t volume;
  std::int32_t class_id;
};

PromptSet initial_prompt(InitialPrompt kind, const Mask2D& truth, std::uint64_t seed) {
  PromptSet p;
  if (kind == InitialPrompt::point)
    p.points.push_back(gen_point(truth, seed));
  else
    p.box = gen_box(truth, seed);
  return p;
}

std::uint64_t object_seed(std::uint64_t seed, std::size_t volume, std::int32_t class_id) {
  return derive_seed(seed, {static_cast<std::uint64_t>(volume),
                            static_cast<std::uint64_t>(class_id)});
}

ReportRow volume_row(const SegmenterFactory& factory, const EvalVolume& v,
                     std::size_t vi, std::int32_t class_id, const Mask3D& truth,
                     const BenchmarkConfig& cfg) {
  const auto seed = object_seed(cfg.seed, vi, class_id);
  Boundaries b{-1, -1};
  int start = 0;
  std::size_t best_area = 0;
  for (int z = 0; z < truth.depth(); ++z) {
    const auto n = truth.slice_count(z);
    if (n == 0) continue;
    if (b.bottom < 0) b.bottom = z;
    b.top = z;
    if (n > best_area) {
      best_area = n;
      start = z;
    }
  }
  Session s(factory(truth), v.volume, b, cfg.mode, cfg.window);
  s.prompt(start, initial_prompt(cfg.prompt, truth.slice(start), seed));

  ReportRow row;
  row.volume = v.name;
  row.class_id = class_id;
  row.prompts = 3;
  row.edit_curve.push_back(dice3d(s.prediction(), truth));
  for (int e = 0; e < cfg.edits; ++e) {
    int worst = -1;
    std::size_t worst_err = 0;
    for (int z = b.bottom; z <= b.top; ++z) {
      const auto err = error_mask(s.prediction().slice(z), truth.slice(z));
      const auto n = err.false_negatives.count() + err.false_positives.count();
      if (n > worst_err) {
        worst_err = n;
        worst = z;
      }
    }
    if (worst < 0) break;
    const auto cp = gen_correction_point(
        s.prediction().slice(worst), truth.slice(worst),
        derive_seed(seed, {tag(Stream::edits), static_cast<std::uint64_t>(e)}));
    s.apply_edit(worst, *cp);
    row.edit_curve.push_back(dice3d(s.prediction(), truth));
  }
  row.dice = row.edit_curve.back();
  row.edits_used = static_cast<int>(row.edit_curve.size()) - 1;
  return row;
}

ReportRow slice_row(const SegmenterFactory& factory, const EvalVolume& v,
                    std::size_t vi, std::int32_t class_id, const Mask3D& truth,
                    const BenchmarkConfig& cfg) {
  const auto seed = object_seed(cfg.seed, vi, class_id);
  const auto model = factory(truth);
  const int S = model->config().image_size;
  const int low = model->config().low_res;
  Mask3D pred(truth.depth(), truth.height(), truth.width());
  Mask3D oracle = pred;

  ReportRow row;
  row.volume = v.name;
  row.class_id = class_id;
  for (int z = 0; z < truth.depth(); ++z) {
    if (truth.slice_count(z) == 0) continue;
    const Mask2D gt = truth.slice(z);
    const auto zseed = derive_seed(seed, {static_cast<std::uint64_t>(z)});
    const auto image = resize_pad(window_normalize(v.volume->slice(z), cfg.window), S);
    PromptSet prompt = initial_prompt(cfg.prompt, gt, zseed);
    auto out = model->predict(image, to_model_prompt(prompt, image.pad, low), z);
    ++row.prompts;
    std::vector<PointPrompt> points = prompt.points;
    for (int e = 0; e < cfg.edits; ++e) {
      const auto cp = gen_correction_point(
          out.primary(), gt, derive_seed(zseed, {tag(Stream::edits), static_cast<std::uint64_t>(e)}));
      if (!cp) break;
      points.push_back(*cp);
      PromptSet next;
      next.mask = out.primary();
      next.points = points;
      out = model->predict(image, to_model_prompt(next, image.pad, low), z);
      ++row.edits_used;
    }
    pred.set_slice(z, out.primary());
    if (cfg.oracle) oracle.set_slice(z, oracle_select(out, gt).mask);
  }
  row.dice = dice3d(pred, truth);
  if (cfg.oracle) row.oracle_dice = dice3d(oracle, truth);
  return row;
}

BenchmarkReport run(const SegmenterFactory& factory, const std::vector<EvalVolume>& data,
                    const BenchmarkConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  BenchmarkReport rep;
  rep.config = cfg;

  std::vector<Job> jobs;
  for (std::size_t vi = 0; vi < data.size(); ++vi)
    for (auto c : data[vi].class_ids) jobs.push_back({vi, c});

  std::vector<std::optional<ReportRow>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        const auto& v = data[jobs[j].volume];
        const Mask3D truth = v.labels.class_mask(jobs[j].class_id);
        if (truth.count() == 0) continue;
        results[j] = cfg.protocol == Protocol::volume
                         ? volume_row(factory, v, jobs[j].volume, jobs[j].class_id, truth, cfg)
                         : slice_row(factory, v, jobs[j].volume, jobs[j].class_id, truth, cfg);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& r : results) {
    if (r)
      rep.rows.push_back(std::move(*r));
    else
      ++rep.skipped;
  }

  auto summarize = [&](std::int32_t class_id) {
    Summary s;
    s.class_id = class_id;
    std::vector<double> d, o;
    for (const auto& r : rep.rows) {
      if (class_id != 0 && r.class_id != class_id) continue;
      d.push_back(r.dice);
      if (r.oracle_dice) o.push_back(*r.oracle_dice);
    }
    s.n = d.size();
    std::tie(s.mean, s.ci95) = mean_ci95(d);
    if (cfg.oracle) {
      auto [m, h] = mean_ci95(o);
      s.oracle_mean = m;
      s.oracle_ci95 = h;
    }
    return s;
  };
  std::map<std::int32_t, bool> seen;
  for (const auto& r : rep.rows) seen[r.class_id] = true;
  for (const auto& [c, _] : seen) rep.classes.push_back(summarize(c));
  rep.overall = summarize(0);

  if (cfg.protocol == Protocol::volume && !rep.rows.empty()) {
    rep.edit_curve.assign(cfg.edits + 1, 0.0);
    for (const auto& r : rep.rows)
      for (int k = 0; k <= cfg.edits; ++k)
        rep.edit_curve[k] += r.edit_curve[std::min<std::size_t>(k, r.edit_curve.size() - 1)];
    for (auto& x : rep.edit_curve) x /= static_cast<double>(rep.rows.size());
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace

BenchmarkReport run_volume_benchmark(const SegmenterFactory& model,
                                     const std::vector<EvalVolume>& data,
                                     const BenchmarkConfig& config) {
  auto c = config;
  c.protocol = Protocol::volume;
  return run(model, data, c);
}

BenchmarkReport run_slice_benchmark(const SegmenterFactory& model,
                                    const std::vector<EvalVolume>& data,
                                    const BenchmarkConfig& config) {
  auto c = config;
  c.protocol = Protocol::slice;
  return run(model, data, c);
}

BenchmarkReport run_oracle_eval(const SegmenterFactory& model,
                                const std::vector<EvalVolume>& data,
                                BenchmarkConfig config) {
  config.protocol = Protocol::slice;
  config.oracle = true;
  return run(model, data, config);
}

BenchmarkReport run_benchmark(const SegmenterFactory& model,
                              const std::vector<EvalVolume>& data,
                              const BenchmarkConfig& config) {
  if (config.oracle) {
    if (config.protocol != Protocol::slice)
      throw std::invalid_argument("oracle evaluation uses the slice protocol");
    return run_oracle_eval(model, data, config);
  }
  return run(model, data, config);
}

// ------------------------------------------------------------------ output

nlohmann::ordered_json report_json(const BenchmarkReport& r) {
  using J = nlohmann::ordered_json;
  const auto& c = r.config;
  J cfg = {{"protocol", to_string(c.protocol)},
           {"prompt", to_string(c.prompt)},
           {"edits", c.edits},
           {"mode", to_string(c.mode)},
           {"oracle", c.oracle},
           {"window", {c.window.lo, c.window.hi}},
           {"seed", c.seed},
           {"dataset", c.dataset}};
  auto summary = [&](const Summary& s) {
    J j = {{"n", s.n}, {"mean_dice", s.mean}, {"ci95_half_width", s.ci95}};
    if (s.oracle_mean) {
      j["oracle_mean_dice"] = *s.oracle_mean;
      j["oracle_ci95_half_width"] = *s.oracle_ci95;
    }
    return j;
  };
  J classes = J::array();
  for (const auto& s : r.classes) {
    J j = {{"class_id", s.class_id}};
    j.update(summary(s));
    classes.push_back(j);
  }
  J rows = J::array();
  for (const auto& row : r.rows) {
    J j = {{"volume", row.volume}, {"class_id", row.class_id}, {"dice", row.dice}};
    if (row.oracle_dice) j["oracle_dice"] = *row.oracle_dice;
    j["prompts"] = row.prompts;
    j["edits_used"] = row.edits_used;
    if (c.protocol == Protocol::volume) j["edit_curve"] = row.edit_curve;
    rows.push_back(j);
  }
  J out = {{"schema_version", kReportSchemaVersion},
           {"config", cfg},
           {"edit_placement", c.edits > 0 ? "automatic" : "none"},
           {"summary", {{"overall", summary(r.overall)}, {"classes", classes}}}};
  if (c.protocol == Protocol::volume) out["edit_curve"] = r.edit_curve;
  out["skipped"] = r.skipped;
  out["rows"] = rows;
  if (r.runtime_s) out["runtime_s"] = *r.runtime_s;
  return out;
}

std::string emit_report_json(const BenchmarkReport& r) { return report_json(r).dump(2) + "\n"; }

std::string emit_report_csv(const BenchmarkReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "volume,class_id,dice,oracle_dice,prompts,edits_used\n";
  for (const auto& row : r.rows) {
    os << row.volume << ',' << row.class_id << ',' << row.dice << ',';
    if (row.oracle_dice) os << *row.oracle_dice;
    os << ',' << row.prompts << ',' << row.edits_used << '\n';
  }
  return os.str();
}

}  // namespace voxprompt

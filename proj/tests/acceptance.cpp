// Acceptance suite P1-P10. One PASS/FAIL line per criterion; exit status is
// the number of failures. The trained model is cached in --cache-dir under a
// name derived from the training recipe.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <cstring>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "voxprompt/eval.hpp"
#include "voxprompt/net/checkpoint.hpp"
#include "voxprompt/net/gradcheck.hpp"
#include "voxprompt/net/loss.hpp"
#include "voxprompt/net/train.hpp"
#include "voxprompt/prompts.hpp"
#include "voxprompt/rle.hpp"
#include "voxprompt/rng.hpp"

namespace fs = std::filesystem;
using namespace voxprompt;
using Clock = std::chrono::steady_clock;

namespace tol {
constexpr double grad_rel = 1e-4;
constexpr std::size_t grad_max_params = 10000;
constexpr int grad_probes = 200;
constexpr double grad_seconds = 60;
constexpr double dice_self = 1e-6;
constexpr double bce_self = 1e-5;
constexpr double dice_zero = 1e-6;
constexpr double dice_third = 1e-6;
constexpr int loss_masks = 100;
constexpr int oracle_phantoms = 50;
constexpr double oracle_seconds = 30;
constexpr int prompt_samples = 100000;
constexpr double slice_box_dice = 0.90;
constexpr double volume_mask_dice = 0.85;
constexpr double mask_minus_bbox = 0.05;
constexpr int edit_budget = 10;
constexpr double edit_gain = 0.02;
constexpr int roundtrips = 100;
}  // namespace tol

namespace {

constexpr Dims kPhantomDims{32, 64, 64};
constexpr int kTrainVolumes = 200;
constexpr int kHeldOut = 20;
constexpr std::uint64_t kTrainSeed = 1000;
constexpr std::uint64_t kHeldOutSeed = 2000;

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::cout << id << " " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Phantom scene(std::uint64_t base, int i) {
  return scene_generate(random_scene(kPhantomDims, derive_seed(base, {tag(Stream::phantom), std::uint64_t(i)})));
}

net::ModelConfig model_config() {
  net::ModelConfig m;
  m.image_size = 64;
  m.low_res = 16;
  m.widths = {16, 32, 64, 64};
  m.seed = 1;
  return m;
}

net::TrainConfig train_config(int steps) {
  net::TrainConfig t;
  t.steps = steps;
  t.seed = 7;
  return t;
}

// ------------------------------------------------------------------ P1..P4

void p1() {
  const auto t0 = Clock::now();
  net::GradCheckConfig gc;
  gc.parameters = tol::grad_probes;
  const auto r = net::grad_check(gc);
  const double secs = seconds_since(t0);
  const bool ok = r.max_rel_error <= tol::grad_rel && r.parameter_count <= tol::grad_max_params &&
                  static_cast<int>(r.checked) >= tol::grad_probes && secs < tol::grad_seconds;
  std::ostringstream d;
  d << "grad_check max_rel=" << r.max_rel_error << " (<= " << tol::grad_rel << "), params=" << r.parameter_count
    << ", probed=" << r.checked << ", float64 central differences, " << fmt(secs, 2) << "s (< "
    << tol::grad_seconds << "s)";
  report("P1", ok, d.str());
}

void p2() {
  double worst_dice = 0, worst_bce = 0, worst_zero = 0;
  std::mt19937_64 g(42);
  for (int k = 0; k < tol::loss_masks; ++k) {
    const int h = 8 + static_cast<int>(g() % 57), w = 8 + static_cast<int>(g() % 57);
    std::bernoulli_distribution b(0.05 + 0.9 * (g() % 1000) / 1000.0);
    Mask2D m(h, w);
    for (auto& v : m.bits()) v = b(g);
    if (m.empty()) m.set(0, 0);
    std::vector<double> p(m.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = m.bits()[i];
    worst_dice = std::max(worst_dice, net::dice_loss(p, m));
    worst_bce = std::max(worst_bce, net::bce_loss(p, m));
    worst_zero = std::max(worst_zero, std::abs(net::dice_loss(std::vector<double>(m.size(), 0.0), m) - 1.0));
  }
  Mask2D half(32, 32);
  for (std::size_t i = 0; i < half.size() / 2; ++i) half.bits()[i] = 1;
  const double third = net::dice_loss(std::vector<double>(half.size(), 0.5), half);
  const double third_err = std::abs(third - 1.0 / 3.0);
  const bool ok = worst_dice <= tol::dice_self && worst_bce <= tol::bce_self && worst_zero <= tol::dice_zero &&
                  third_err <= tol::dice_third;
  std::ostringstream d;
  d << "over " << tol::loss_masks << " masks: max dice(g,g)=" << worst_dice << " (<= " << tol::dice_self
    << "), max bce(g,g)=" << worst_bce << " (<= " << tol::bce_self << "), max |dice(0,g)-1|=" << worst_zero
    << "; half-mask m=0.5 dice=" << fmt(third, 9) << " (1/3 +- " << tol::dice_third << ")";
  report("P2", ok, d.str());
}

void p3() {
  const auto t0 = Clock::now();
  net::ModelConfig grid = model_config();
  int exact = 0, runs = 0;
  for (int i = 0; i < tol::oracle_phantoms; ++i) {
    const auto ph = scene(77, i);
    const auto vol = std::make_shared<const Volume>(ph.volume);
    const auto classes = ph.labels.present_classes();
    const auto truth = ph.labels.class_mask(classes[static_cast<std::size_t>(i) % classes.size()]);
    int lo = -1, hi = -1;
    for (int z = 0; z < truth.depth(); ++z)
      if (truth.slice_count(z) > 0) {
        if (lo < 0) lo = z;
        hi = z;
      }
    Rng rng(static_cast<std::uint64_t>(i), {0xACC});
    const int start = rng.uniform_int(lo, hi);
    auto oracle = std::make_shared<const OracleSegmenter>(truth, grid);
    PromptSet p;
    p.box = bbox_of(truth.slice(start));
    if (!p.box) p.points.push_back({{0, 0}, true});
    for (auto mode : {ForwardingMode::mask, ForwardingMode::bbox}) {
      const auto pred = propagate_volume(oracle, vol, start, p, {lo, hi}, mode);
      ++runs;
      exact += dice3d(pred, truth) == 1.0 && pred == truth;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << exact << "/" << runs << " oracle propagations exact (dice3d == 1.0) over " << tol::oracle_phantoms
    << " phantoms x {mask, bbox}, random start slice; " << fmt(secs, 2) << "s (< " << tol::oracle_seconds << "s)";
  report("P3", exact == runs && secs < tol::oracle_seconds, d.str());
}

void p4() {
  std::size_t bad_point = 0, bad_delta = 0, bad_box = 0, bad_label = 0, corrections = 0;
  std::vector<Mask2D> shapes;
  for (int i = 0; i < 16; ++i) {
    const auto ph = scene(31, i);
    const auto cls = ph.labels.present_classes();
    const auto m = ph.labels.class_mask(cls[0]);
    int best = 0;
    for (int z = 0; z < m.depth(); ++z)
      if (m.slice_count(z) > m.slice_count(best)) best = z;
    shapes.push_back(m.slice(best));
  }
  for (int s = 0; s < tol::prompt_samples; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const auto& gt = shapes[s % shapes.size()];
    const auto pt = gen_point(gt, seed);
    bad_point += !(pt.positive && gt(pt.position.row, pt.position.col));
    const auto d = sample_box_deltas(seed);
    for (int v : d) bad_delta += v < kBoxDeltaMin || v > kBoxDeltaMax;
    bad_box += !(gen_box(gt, seed) == perturb_box(*bbox_of(gt), d, gt.height(), gt.width()));
    // A prediction that is the truth shifted and dilated has both FN and FP.
    AffineParams a;
    a.translate_cols = static_cast<double>(s % 7) - 3;
    a.translate_rows = static_cast<double>((s / 7) % 7) - 3;
    a.morph = (s % 3) - 1;
    const auto pred = apply_affine(gt, a);
    if (const auto c = gen_correction_point(pred, gt, seed)) {
      ++corrections;
      const auto e = error_mask(pred, gt);
      const bool fn = e.false_negatives(c->position.row, c->position.col);
      const bool fp = e.false_positives(c->position.row, c->position.col);
      bad_label += !((c->positive && fn) || (!c->positive && fp));
    }
  }
  std::ostringstream d;
  d << tol::prompt_samples << " samples: points outside gt=" << bad_point << ", box deltas outside ["
    << kBoxDeltaMin << "," << kBoxDeltaMax << "]=" << bad_delta << ", boxes not built from those deltas=" << bad_box
    << ", correction labels inconsistent=" << bad_label << "/" << corrections;
  report("P4", bad_point == 0 && bad_delta == 0 && bad_box == 0 && bad_label == 0 && corrections > 0, d.str());
}

// ------------------------------------------------------------------ P9

void p9() {
  std::mt19937_64 g(9);
  int nifti_ok = 0, labels_ok = 0, rle_ok = 0;
  for (int k = 0; k < tol::roundtrips; ++k) {
    const Dims d{1 + int(g() % 12), 1 + int(g() % 40), 1 + int(g() % 40)};
    const Spacing sp{0.5 + (g() % 100) / 20.0, 0.3 + (g() % 100) / 50.0, 0.3 + (g() % 100) / 50.0};
    std::vector<float> v(d.voxels());
    for (auto& x : v) {
      // Arbitrary finite bit patterns, not just round numbers.
      std::uint32_t bits;
      do {
        bits = static_cast<std::uint32_t>(g());
        std::memcpy(&x, &bits, 4);
      } while (!std::isfinite(x));
    }
    const Volume vol(d, sp, std::move(v));
    const auto bytes = write_nifti(vol);
    const auto back = parse_nifti(bytes);
    nifti_ok += back.volume == vol && write_nifti(back.volume) == bytes;

    LabelVolume lab(d, sp);
    for (auto& x : lab.labels()) x = static_cast<std::int32_t>(g() % 5);
    labels_ok += parse_nifti_labels(write_nifti_labels(lab)) == lab;

    const int h = 1 + int(g() % 64), w = 1 + int(g() % 64);
    std::bernoulli_distribution b((g() % 101) / 100.0);
    Mask2D m(h, w);
    for (auto& x : m.bits()) x = b(g);
    rle_ok += rle_decode(rle_encode(m), h, w) == m;
  }
  std::ostringstream d;
  d << "NIfTI volumes " << nifti_ok << "/" << tol::roundtrips << ", NIfTI labels " << labels_ok << "/"
    << tol::roundtrips << ", RLE masks " << rle_ok << "/" << tol::roundtrips << " bit-exact";
  report("P9", nifti_ok == tol::roundtrips && labels_ok == tol::roundtrips && rle_ok == tol::roundtrips, d.str());
}

// ------------------------------------------------------------------ model

// Everything but the step count; a shorter cached run is resumed, which
// gives the same weights as training from scratch.
std::string recipe_key(const net::ModelConfig& m, net::TrainConfig t) {
  t.steps = 0;
  nlohmann::json j = {{"model", net::config_to_json(m)},
                      {"train", net::train_config_to_json(t)},
                      {"volumes", kTrainVolumes},
                      {"seed", kTrainSeed},
                      {"dims", {kPhantomDims.z, kPhantomDims.y, kPhantomDims.x}}};
  const auto s = j.dump();
  std::uint64_t h = 0;
  for (unsigned char c : s) h = mix64(h ^ c);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::shared_ptr<const NetworkSegmenter> trained_model(const fs::path& cache, const fs::path& override_path,
                                                      int steps, std::string& note) {
  if (!override_path.empty()) {
    auto c = net::read_checkpoint(override_path);
    note = "checkpoint " + override_path.string() + " (step " + std::to_string(c.step) + ")";
    return std::make_shared<const NetworkSegmenter>(net::UNet<float>(c.config, std::move(c.params)));
  }
  const auto mc = model_config();
  const auto tc = train_config(steps);
  const auto target = static_cast<std::uint64_t>(steps);
  fs::create_directories(cache);
  const auto path = cache / ("model-" + recipe_key(mc, tc) + ".ckpt");
  std::optional<net::Checkpoint> cached;
  if (fs::exists(path)) {
    cached = net::read_checkpoint(path);
    if (cached->step == target) {
      note = "cached " + path.filename().string() + " (step " + std::to_string(cached->step) + ")";
      return std::make_shared<const NetworkSegmenter>(net::UNet<float>(cached->config, std::move(cached->params)));
    }
    if (cached->step > target) cached.reset();
  }
  const auto t0 = Clock::now();
  net::TrainingSet set(mc.image_size);
  for (int i = 0; i < kTrainVolumes; ++i) {
    const auto ph = scene(kTrainSeed, i);
    set.add_volume(ph.volume, ph.labels, ph.labels.present_classes());
  }
  auto tr = cached ? net::Trainer(*cached, tc) : net::Trainer(mc, tc);
  const auto from = tr.step();
  std::cerr << path.string() << ": training on " << set.size() << " slices from " << kTrainVolumes << " phantoms, steps " << from
            << ".." << steps << std::endl;
  double loss = 0;
  int n = 0;
  tr.run(set, target, [&](const net::StepMetrics& m) {
    loss += m.loss;
    ++n;
    if ((m.step + 1) % 100 == 0) {
      std::cerr << "  step " << m.step + 1 << " loss " << fmt(loss / n) << " " << fmt(seconds_since(t0), 0) << "s"
                << std::endl;
      loss = 0;
      n = 0;
    }
    if ((m.step + 1) % 500 == 0) net::write_checkpoint(path, tr.checkpoint());
  });
  net::write_checkpoint(path, tr.checkpoint());
  note = "trained steps " + std::to_string(from) + ".." + std::to_string(steps) + " in " +
         fmt(seconds_since(t0) / 60.0, 1) + " min on " +
         std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " core(s), " +
         std::to_string(tr.model().parameter_count()) + " params";
  return std::make_shared<const NetworkSegmenter>(tr.model());
}

std::vector<EvalVolume> held_out() {
  std::vector<EvalVolume> out;
  for (int i = 0; i < kHeldOut; ++i) {
    auto ph = scene(kHeldOutSeed, i);
    EvalVolume v;
    v.name = "held_" + std::to_string(i);
    v.class_ids = ph.labels.present_classes();
    v.volume = std::make_shared<const Volume>(std::move(ph.volume));
    v.labels = std::move(ph.labels);
    out.push_back(std::move(v));
  }
  return out;
}

std::string report_bytes(BenchmarkReport r) {
  r.runtime_s.reset();
  return emit_report_json(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria P1-P10"};
  fs::path cache = "acceptance-cache", ckpt;
  int steps = 9000;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool quick = false;
  app.add_option("--cache-dir", cache, "Where the trained model is kept");
  app.add_option("--checkpoint", ckpt, "Evaluate this checkpoint instead of training");
  app.add_option("--steps", steps, "Training steps");
  app.add_option("--threads", threads, "Evaluation threads");
  app.add_flag("--quick", quick, "Skip the trained-model criteria P5-P8 and P10");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  p1();
  p2();
  p3();
  p4();
  p9();
  if (quick) {
    std::cout << "P5-P8, P10 skipped (--quick)" << std::endl;
    return failures;
  }

  std::string note;
  const auto model = trained_model(cache, ckpt, steps, note);
  std::cout << "model: " << note << std::endl;
  const auto factory = shared_factory(model);
  const auto data = held_out();

  BenchmarkConfig vol;
  vol.protocol = Protocol::volume;
  vol.prompt = InitialPrompt::box;
  vol.mode = ForwardingMode::mask;
  vol.edits = tol::edit_budget;
  vol.seed = 5;
  vol.threads = threads;
  vol.dataset = "held-out phantoms";
  const auto vm = run_benchmark(factory, data, vol);  // edit_curve[0] is the no-edit score

  BenchmarkConfig box = vol;
  box.mode = ForwardingMode::bbox;
  box.edits = 0;
  const auto vb = run_benchmark(factory, data, box);

  BenchmarkConfig sl = vol;
  sl.protocol = Protocol::slice;
  sl.edits = 0;
  sl.oracle = true;
  const auto so = run_benchmark(factory, data, sl);

  const double v0 = vm.edit_curve.front();
  const double v10 = vm.edit_curve.back();
  {
    std::ostringstream d;
    d << "slice-level box dice " << fmt(so.overall.mean) << " (>= " << tol::slice_box_dice
      << "), volume-level mask-forwarding dice " << fmt(v0) << " (>= " << tol::volume_mask_dice << "), n="
      << so.overall.n << " objects in " << kHeldOut << " held-out phantoms";
    report("P5", so.overall.mean >= tol::slice_box_dice && v0 >= tol::volume_mask_dice, d.str());
  }
  {
    std::ostringstream d;
    d << "volume-level mask " << fmt(v0) << " - bbox " << fmt(vb.overall.mean) << " = " << fmt(v0 - vb.overall.mean)
      << " (>= " << tol::mask_minus_bbox << ")";
    report("P6", v0 - vb.overall.mean >= tol::mask_minus_bbox, d.str());
  }
  {
    std::ostringstream d;
    d << "edit curve 0->" << tol::edit_budget << ": " << fmt(v0) << " -> " << fmt(v10) << " = "
      << fmt(v10 - v0) << " (>= " << tol::edit_gain << "); curve";
    for (double c : vm.edit_curve) d << " " << fmt(c, 3);
    report("P7", v10 - v0 >= tol::edit_gain, d.str());
  }
  {
    const double oracle = so.overall.oracle_mean.value_or(0.0);
    std::ostringstream d;
    d << "slice-level oracle-selected " << fmt(oracle) << " >= primary " << fmt(so.overall.mean);
    report("P8", oracle >= so.overall.mean, d.str());
  }
  {
    // Fresh runs with the same seeds, different thread counts.
    const int other = threads == 1 ? 2 : 1;
    auto rerun = [&](BenchmarkConfig c, const BenchmarkReport& first) {
      c.threads = other;
      return report_bytes(run_benchmark(factory, data, c)) == report_bytes(first);
    };
    const bool same_edit = rerun(vol, vm);
    const bool same_box = rerun(box, vb);
    const bool same_slice = rerun(sl, so);
    std::ostringstream d;
    d << "repeat eval reports byte-identical: volume/mask/edits " << (same_edit ? "yes" : "no") << ", volume/bbox "
      << (same_box ? "yes" : "no") << ", slice/oracle " << (same_slice ? "yes" : "no") << " (runtime omitted)";
    report("P10", same_edit && same_box && same_slice, d.str());
  }
  std::cout << "total " << fmt(seconds_since(t0) / 60.0, 1) << " min, " << failures << " failing" << std::endl;
  return failures;
}

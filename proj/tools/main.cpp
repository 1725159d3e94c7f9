#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "config_file.hpp"
#include "voxprompt/eval.hpp"
#include "voxprompt/net/checkpoint.hpp"
#include "voxprompt/net/train.hpp"
#include "voxprompt/propagate.hpp"
#include "voxprompt/rng.hpp"
#include "voxprompt/service.hpp"

namespace fs = std::filesystem;
using namespace voxprompt;

namespace {

// Wrong flags or flag combinations; exits 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Range range_of(const std::vector<double>& v, const char* what) {
  if (v.size() != 2 || v[0] > v[1])
    throw UsageError(std::string(what) + " takes LO,HI with LO <= HI");
  return {v[0], v[1]};
}

std::shared_ptr<const NetworkSegmenter> load_model(const fs::path& ckpt) {
  auto c = net::read_checkpoint(ckpt);
  return std::make_shared<const NetworkSegmenter>(net::UNet<float>(c.config, std::move(c.params)));
}

// ------------------------------------------------------------------ gen-data

struct GenData {
  fs::path out;
  int volumes = 10;
  std::vector<int> dims{32, 64, 64};
  std::uint64_t seed = 0;

  void add(CLI::App& app) {
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--volumes", volumes, "Number of phantoms")->check(CLI::PositiveNumber);
    app.add_option("--dims", dims, "Volume size Z,Y,X")->delimiter(',')->expected(3);
    app.add_option("--seed", seed, "Base seed");
  }

  int run() {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw std::runtime_error("cannot create " + out.string() + ": " + ec.message());
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < volumes; ++i) {
      const auto scene = random_scene({dims[0], dims[1], dims[2]},
                                      derive_seed(seed, {tag(Stream::phantom), static_cast<std::uint64_t>(i)}));
      const auto ph = scene_generate(scene);
      std::ostringstream vn, ln;
      vn << "vol_" << std::setw(3) << std::setfill('0') << i << ".nii";
      ln << "lab_" << std::setw(3) << std::setfill('0') << i << ".nii";
      write_file(out / vn.str(), write_nifti(ph.volume));
      write_file(out / ln.str(), write_nifti_labels(ph.labels));
      entries.push_back({vn.str(), ln.str(), ph.labels.present_classes()});
    }
    write_manifest(out / "manifest.json", entries);
    std::cout << "wrote " << volumes << " phantoms to " << out.string() << "\n";
    return 0;
  }
};

// --------------------------------------------------------------------- train

struct Train {
  fs::path data, out, resume, metrics;
  int steps = 3000;
  int batch_size = 8;
  double lr = 1e-3;
  std::vector<int> edit_steps{0, 4};
  int image_size = 64;
  std::vector<int> widths{16, 32, 64, 64};
  std::uint64_t seed = 0;
  bool no_mask_prompt = false, no_edit_training = false, no_prefetch = false, no_augment = false;
  int checkpoint_every = 0;
  std::vector<double> translate{-4, 4}, rotation{-10, 10}, shear{-0.1, 0.1}, zoom{0.9, 1.1},
      noise{0, 0.02}, window_lo{-700, -300}, window_hi{800, 1200};

  void add(CLI::App& app) {
    app.add_option("--data", data, "Training manifest")->required();
    app.add_option("--out", out, "Checkpoint to write")->required();
    app.add_option("--steps", steps, "Train until this step count");
    app.add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
    app.add_option("--lr", lr);
    app.add_option("--edit-steps", edit_steps, "Edit steps per sample MIN,MAX")->delimiter(',')->expected(2);
    app.add_option("--image-size", image_size, "Model grid side (multiple of 8)");
    app.add_option("--widths", widths, "Encoder widths")->delimiter(',')->expected(4);
    app.add_option("--seed", seed);
    app.add_flag("--no-mask-prompt", no_mask_prompt, "Never sample noisy-mask prompts");
    app.add_flag("--no-edit-training", no_edit_training, "Single forward pass per sample");
    app.add_flag("--no-prefetch", no_prefetch, "Prepare batches on the training thread");
    app.add_flag("--no-augment", no_augment, "Disable geometric/intensity augmentation");
    app.add_option("--resume", resume, "Continue from this checkpoint");
    app.add_option("--metrics", metrics, "JSON-lines metrics file (default stdout)");
    app.add_option("--checkpoint-every", checkpoint_every, "Also save every N steps");
    app.add_option("--translate", translate, "Augment translation LO,HI px")->delimiter(',')->expected(2);
    app.add_option("--rotation", rotation, "Augment rotation LO,HI deg")->delimiter(',')->expected(2);
    app.add_option("--shear", shear)->delimiter(',')->expected(2);
    app.add_option("--zoom", zoom)->delimiter(',')->expected(2);
    app.add_option("--noise", noise, "Gaussian noise sigma LO,HI")->delimiter(',')->expected(2);
    app.add_option("--window-lo", window_lo, "Window jitter for lo")->delimiter(',')->expected(2);
    app.add_option("--window-hi", window_hi, "Window jitter for hi")->delimiter(',')->expected(2);
  }

  int run() {
    net::TrainConfig tc;
    tc.batch_size = batch_size;
    tc.lr = lr;
    tc.steps = steps;
    tc.edit_steps_min = edit_steps[0];
    tc.edit_steps_max = edit_steps[1];
    tc.use_mask_prompt = !no_mask_prompt;
    tc.use_edit_training = !no_edit_training;
    tc.prefetch = !no_prefetch;
    tc.seed = seed;
    tc.augment.translate = range_of(translate, "--translate");
    tc.augment.rotation_deg = range_of(rotation, "--rotation");
    tc.augment.shear = range_of(shear, "--shear");
    tc.augment.zoom = range_of(zoom, "--zoom");
    tc.augment.noise_sigma = range_of(noise, "--noise");
    tc.augment.window_lo = range_of(window_lo, "--window-lo");
    tc.augment.window_hi = range_of(window_hi, "--window-hi");
    if (no_augment) tc.augment = net::AugmentConfig::identity();
    try {
      tc.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }

    std::unique_ptr<net::Trainer> trainer;
    if (!resume.empty()) {
      trainer = std::make_unique<net::Trainer>(net::read_checkpoint(resume), tc);
    } else {
      net::ModelConfig mc;
      mc.image_size = image_size;
      mc.low_res = image_size / 4;
      std::copy(widths.begin(), widths.end(), mc.widths.begin());
      mc.seed = seed;
      try {
        mc.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      trainer = std::make_unique<net::Trainer>(mc, tc);
    }
    const auto set = net::TrainingSet::from_manifest(data, trainer->model().config().image_size);
    std::cerr << "training samples: " << set.size() << " from " << set.volume_count()
              << " volumes; starting at step " << trainer->step() << "\n";

    std::ofstream mfile;
    if (!metrics.empty()) {
      mfile.open(metrics, std::ios::app);
      if (!mfile) throw std::runtime_error("cannot open " + metrics.string());
    }
    std::ostream& mout = metrics.empty() ? std::cout : mfile;
    trainer->run(set, static_cast<std::uint64_t>(steps), [&](const net::StepMetrics& m) {
      mout << net::metrics_json(m).dump() << "\n";
      if (checkpoint_every > 0 && (m.step + 1) % checkpoint_every == 0) {
        mout.flush();
        net::write_checkpoint(out, trainer->checkpoint());
      }
    });
    net::write_checkpoint(out, trainer->checkpoint());
    if (trainer->skipped_total() > 0)
      std::cerr << "warning: skipped " << trainer->skipped_total()
                << " samples whose augmented mask was empty\n";
    return 0;
  }
};

// ---------------------------------------------------------------------- eval

struct Eval {
  fs::path ckpt, data, report, csv;
  std::string protocol = "volume", prompt = "box", mode = "mask";
  int edits = 0;
  bool oracle = false, oracle_select = false, no_runtime = false;
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<double> window{-500, 1000};
  double min_dice = -1;

  void add(CLI::App& app) {
    app.add_option("--ckpt", ckpt, "Model checkpoint");
    app.add_option("--data", data, "Evaluation manifest")->required();
    app.add_option("--protocol", protocol)->check(CLI::IsMember({"volume", "slice"}));
    app.add_option("--prompt", prompt)->check(CLI::IsMember({"point", "box"}));
    app.add_option("--edits", edits, "Edit budget (volume: total, slice: per slice)")->check(CLI::NonNegativeNumber);
    app.add_option("--mode", mode, "Forwarding mode")->check(CLI::IsMember({"mask", "bbox"}));
    app.add_option("--report", report, "JSON report path")->required();
    app.add_option("--csv", csv, "Also write per-row CSV");
    app.add_flag("--oracle", oracle, "Use the ground-truth segmenter instead of a checkpoint");
    app.add_flag("--oracle-select", oracle_select, "Score the best secondary mask per slice too");
    app.add_flag("--no-runtime", no_runtime, "Leave runtime out of the report");
    app.add_option("--seed", seed);
    app.add_option("--threads", threads)->check(CLI::PositiveNumber);
    app.add_option("--window", window, "HU window LO,HI")->delimiter(',')->expected(2);
    app.add_option("--min-dice", min_dice, "Exit 1 when overall mean dice falls below");
  }

  int run() {
    BenchmarkConfig cfg;
    cfg.protocol = protocol_from_string(protocol);
    cfg.prompt = initial_prompt_from_string(prompt);
    cfg.mode = forwarding_mode_from_string(mode);
    cfg.edits = edits;
    cfg.oracle = oracle_select;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.window = {window[0], window[1]};
    cfg.dataset = data.filename().string();
    if (cfg.mode == ForwardingMode::bbox && cfg.protocol != Protocol::volume)
      throw UsageError("--mode bbox requires --protocol volume");
    if (cfg.oracle && cfg.protocol != Protocol::slice)
      throw UsageError("--oracle-select requires --protocol slice");
    if (oracle == !ckpt.empty()) throw UsageError("give exactly one of --ckpt or --oracle");
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }

    SegmenterFactory factory;
    if (oracle) {
      factory = oracle_factory();
    } else {
      factory = shared_factory(load_model(ckpt));
    }
    const auto set = load_eval_set(data);
    auto rep = run_benchmark(factory, set, cfg);
    if (no_runtime) rep.runtime_s.reset();
    const auto json = emit_report_json(rep);
    write_file(report, {reinterpret_cast<const std::uint8_t*>(json.data()), json.size()});
    if (!csv.empty()) {
      const auto c = emit_report_csv(rep);
      write_file(csv, {reinterpret_cast<const std::uint8_t*>(c.data()), c.size()});
    }
    std::cout << "mean dice " << rep.overall.mean << " +/- " << rep.overall.ci95 << " (n="
              << rep.overall.n << ")";
    if (rep.overall.oracle_mean) std::cout << ", oracle " << *rep.overall.oracle_mean;
    std::cout << "\n";
    if (min_dice >= 0 && rep.overall.mean < min_dice) {
      std::cerr << "threshold violated: mean dice " << rep.overall.mean << " < " << min_dice << "\n";
      return 1;
    }
    return 0;
  }
};

// --------------------------------------------------------------------- infer

PromptSet prompt_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    PromptSet p;
    if (j.contains("points"))
      for (const auto& pt : j["points"]) {
        const auto label = pt.value("label", std::string("positive"));
        if (label != "positive" && label != "negative")
          throw FormatError("point label must be positive or negative");
        p.points.push_back({{pt.at("row").get<int>(), pt.at("col").get<int>()}, label == "positive"});
      }
    if (j.contains("box")) {
      const auto b = j["box"].get<std::array<int, 4>>();
      p.box = Box{b[0], b[1], b[2], b[3]};
    }
    if (p.empty()) throw FormatError("prompt needs points or a box");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("prompt " + path.string() + ": " + e.what());
  }
}

struct Infer {
  fs::path ckpt, volume, prompt_json, out;
  int slice = 0;
  std::vector<int> boundaries;
  std::string mode = "mask";
  std::vector<double> window{-500, 1000};

  void add(CLI::App& app) {
    app.add_option("--ckpt", ckpt)->required();
    app.add_option("--volume", volume, "NIfTI volume")->required();
    app.add_option("--slice", slice, "Prompted slice")->required();
    app.add_option("--prompt-json", prompt_json, "{\"points\": [...], \"box\": [r0,c0,r1,c1]}")->required();
    app.add_option("--boundaries", boundaries, "BOTTOM,TOP")->delimiter(',')->expected(2)->required();
    app.add_option("--out", out, "Label NIfTI to write")->required();
    app.add_option("--mode", mode)->check(CLI::IsMember({"mask", "bbox"}));
    app.add_option("--window", window)->delimiter(',')->expected(2);
  }

  int run() {
    const Boundaries b{boundaries[0], boundaries[1]};
    if (b.bottom > b.top) throw UsageError("--boundaries needs BOTTOM <= TOP");
    if (!b.contains(slice)) throw UsageError("--slice lies outside --boundaries");
    auto img = parse_nifti(read_file(volume));
    if (b.top >= img.volume.dims().z) throw UsageError("--boundaries exceed the volume");
    const auto vol = std::make_shared<const Volume>(std::move(img.volume));
    const auto pred = propagate_volume(load_model(ckpt), vol, slice, prompt_from_file(prompt_json), b,
                                       forwarding_mode_from_string(mode), {window[0], window[1]});
    LabelVolume labels(vol->dims(), vol->spacing());
    auto bits = pred.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) labels.labels()[i] = bits[i];
    write_file(out, write_nifti_labels(labels));
    std::cout << "foreground voxels: " << pred.count() << "\n";
    return 0;
  }
};

// --------------------------------------------------------------------- serve

struct Serve {
  fs::path ckpt;
  std::string addr = "127.0.0.1:8080";
  std::string cors;
  double max_upload_mb = 256;
  int threads = 4;

  void add(CLI::App& app) {
    app.add_option("--ckpt", ckpt)->required();
    app.add_option("--addr", addr, "HOST:PORT; port 0 picks a free one");
    app.add_option("--cors", cors, "Allowed browser origin");
    app.add_option("--max-upload-mb", max_upload_mb)->check(CLI::PositiveNumber);
    app.add_option("--threads", threads)->check(CLI::PositiveNumber);
  }

  int run() {
    std::string host = addr;
    int port = 8080;
    if (const auto colon = addr.rfind(':'); colon != std::string::npos) {
      host = addr.substr(0, colon);
      try {
        port = std::stoi(addr.substr(colon + 1));
      } catch (const std::exception&) {
        throw UsageError("--addr needs HOST:PORT");
      }
    } else {
      try {
        port = std::stoi(addr);
        host = "127.0.0.1";
      } catch (const std::exception&) {
        throw UsageError("--addr needs HOST:PORT");
      }
    }
    if (port < 0 || port > 65535) throw UsageError("port out of range");
    if (host.empty()) host = "0.0.0.0";

    ServiceConfig sc;
    sc.max_upload_bytes = static_cast<std::size_t>(max_upload_mb * 1024 * 1024);
    if (!cors.empty()) sc.cors_origin = cors;
    sc.threads = threads;
    // Block termination signals here so the waiter thread receives them.
    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGTERM);
    sigaddset(&sigs, SIGINT);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

    Service svc(load_model(ckpt), sc);
    const int bound = svc.bind(host, port);
    std::cout << "listening on " << host << ":" << bound << std::endl;
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&sigs, &sig);
      std::cerr << "signal " << sig << ": draining\n";
      svc.stop();
    });
    svc.listen();
    // listen() can also end on its own; wake the waiter so it can exit.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    std::cerr << "stopped\n";
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Promptable slice segmentation with 3D propagation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenData gen;
  Train train;
  Eval eval;
  Infer infer;
  Serve serve;
  struct Sub {
    CLI::App* app;
    std::function<int()> run;
  };
  std::vector<Sub> subs;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    auto* s = app.add_subcommand(name, help);
    cmd.add(*s);
    s->add_option("--config", "TOML file; keys are long flag names");
    subs.push_back({s, [&cmd] { return cmd.run(); }});
  };
  add("gen-data", "Write synthetic phantoms and a manifest", gen);
  add("train", "Train the segmentation network", train);
  add("eval", "Run a benchmark protocol and write a report", eval);
  add("infer", "Segment a volume from one prompt", infer);
  add("serve", "Start the HTTP session service", serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      if (auto* c = s.app->get_option("--config"); c->count() > 0)
        voxprompt::cli::apply_config_file(*s.app, c->as<std::string>());
      return s.run();
    } catch (const voxprompt::cli::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

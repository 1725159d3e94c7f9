#include "voxprompt/net/train.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "voxprompt/net/loss.hpp"
#include "voxprompt/net/prompt_encoding.hpp"
#include "voxprompt/rng.hpp"

namespace voxprompt::net {

std::string to_string(PromptKind k) {
  switch (k) {
    case PromptKind::point: return "point";
    case PromptKind::box: return "box";
    case PromptKind::mask: return "mask";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (edit_steps_min < 0 || edit_steps_max < edit_steps_min)
    throw std::invalid_argument("edit steps range must satisfy 0 <= min <= max");
  if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  auto range = [](const Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
  return {{"batch_size", c.batch_size},
          {"lr", c.lr},
          {"steps", c.steps},
          {"edit_steps", {c.edit_steps_min, c.edit_steps_max}},
          {"use_mask_prompt", c.use_mask_prompt},
          {"use_edit_training", c.use_edit_training},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"augment",
           {{"translate", range(c.augment.translate)},
            {"rotation_deg", range(c.augment.rotation_deg)},
            {"shear", range(c.augment.shear)},
            {"zoom", range(c.augment.zoom)},
            {"noise_sigma", range(c.augment.noise_sigma)},
            {"window_lo", range(c.augment.window_lo)},
            {"window_hi", range(c.augment.window_hi)}}}};
}

// ---------------------------------------------------------------- dataset

TrainingSet TrainingSet::from_manifest(const std::filesystem::path& manifest,
                                       int image_size, std::size_t min_pixels) {
  TrainingSet set(image_size);
  for (const auto& e : read_manifest(manifest)) {
    const auto img = parse_nifti(read_file(e.volume_path));
    const auto lab = parse_nifti_labels(read_file(e.label_path));
    if (!(img.volume.dims() == lab.dims()))
      throw ShapeError("volume and labels differ in size: " + e.volume_path.string());
    set.add_volume(img.volume, lab, e.class_ids, min_pixels);
  }
  return set;
}

void TrainingSet::add_volume(const Volume& volume, const LabelVolume& labels,
                             std::vector<std::int32_t> class_ids,
                             std::size_t min_pixels) {
  if (!(volume.dims() == labels.dims()))
    throw ShapeError("add_volume: volume and labels differ in size");
  if (class_ids.empty()) class_ids = labels.present_classes();
  const int vi = static_cast<int>(slices_.size());
  auto& slices = slices_.emplace_back();
  const auto& d = volume.dims();
  std::vector<Mask3D> class_masks;
  for (auto c : class_ids) class_masks.push_back(labels.class_mask(c));
  for (int z = 0; z < d.z; ++z) {
    // Shift so zero padding lands on kPadHu.
    Field2D hu = volume.slice(z);
    for (auto& v : hu.values) v -= kPadHu;
    auto resized = resize_pad(hu, image_size_);
    for (auto& v : resized.pixels.values) v += kPadHu;
    slices.push_back(std::move(resized.pixels));
    for (std::size_t k = 0; k < class_ids.size(); ++k) {
      const auto m = class_masks[k].slice(z);
      if (!keep_slice(m, min_pixels)) continue;
      samples_.push_back({vi, z, class_ids[k]});
      masks_.push_back(resize_pad_mask(m, resized.pad));
    }
  }
}

// ----------------------------------------------------------------- trainer

namespace {

Tensor<float> to_tensor(const Field2D& f) {
  Tensor<float> t(1, f.height, f.width);
  std::copy(f.values.begin(), f.values.end(), t.data.begin());
  return t;
}

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t cap) : cap_(cap) {}
  void push(T v) {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return q_.size() < cap_ || closed_; });
    if (closed_) return;
    q_.push_back(std::move(v));
    cv_.notify_all();
  }
  T pop() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return !q_.empty(); });
    T v = std::move(q_.front());
    q_.pop_front();
    cv_.notify_all();
    return v;
  }
  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    cv_.notify_all();
  }

 private:
  std::size_t cap_;
  std::deque<T> q_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace

Trainer::Trainer(const ModelConfig& model, const TrainConfig& config)
    : config_(config), model_(model) {
  config_.validate();
  adam_ = Adam({config_.lr, 0.9, 0.999, 1e-8, config_.clip_norm}, model_.parameter_count());
}

Trainer::Trainer(const Checkpoint& ckpt, const TrainConfig& config)
    : config_(config), model_(ckpt.config, ckpt.params), step_(ckpt.step) {
  config_.validate();
  adam_ = Adam({config_.lr, 0.9, 0.999, 1e-8, config_.clip_norm}, model_.parameter_count());
  if (ckpt.adam) adam_.restore(ckpt.adam->t, ckpt.adam->m, ckpt.adam->v);
}

PreparedSample Trainer::prepare(const Field2D& hu, const Mask2D& mask,
                                std::uint64_t seed) const {
  PreparedSample s;
  s.seed = seed;
  auto aug = augment(hu, mask, config_.augment, seed);
  s.image = to_tensor(aug.image);
  s.mask = std::move(aug.mask);
  if (s.mask.empty()) return s;

  std::vector<PromptKind> kinds{PromptKind::point, PromptKind::box};
  if (config_.use_mask_prompt) kinds.push_back(PromptKind::mask);
  Rng rng(seed, {tag(Stream::prompt_kind)});
  s.kind = kinds[rng.uniform_index(kinds.size())];
  switch (s.kind) {
    case PromptKind::point: s.prompt.points.push_back(gen_point(s.mask, seed)); break;
    case PromptKind::box: s.prompt.box = gen_box(s.mask, seed); break;
    case PromptKind::mask:
      s.prompt.mask = gen_noisy_mask(s.mask, seed, model_.config().low_res);
      break;
  }
  if (config_.use_edit_training) {
    Rng er(seed, {tag(Stream::edits)});
    s.edit_steps = er.uniform_int(config_.edit_steps_min, config_.edit_steps_max);
  }
  return s;
}

std::vector<PreparedSample> Trainer::make_batch(const TrainingSet& data,
                                                std::uint64_t step) const {
  if (data.size() == 0) throw std::invalid_argument("training set is empty");
  if (data.image_size() != model_.config().image_size)
    throw ShapeError("training set image size differs from the model");
  Rng rng(config_.seed, {tag(Stream::sampling), step});
  std::vector<PreparedSample> batch;
  for (int b = 0; b < config_.batch_size; ++b) {
    const auto i = rng.uniform_index(data.size());
    const auto seed = derive_seed(config_.seed, {step, static_cast<std::uint64_t>(b)});
    batch.push_back(prepare(data.hu(i), data.mask(i), seed));
  }
  return batch;
}

StepMetrics Trainer::train_step(const std::vector<PreparedSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  StepMetrics m;
  m.step = step_;
  int valid = 0;
  for (const auto& s : batch) (s.mask.empty() ? m.skipped : valid) += 1;
  m.samples = valid;
  skipped_ += static_cast<std::uint64_t>(m.skipped);
  if (valid == 0) {
    ++step_;
    return m;
  }

  const auto& cfg = model_.config();
  std::vector<float> grads(model_.parameter_count(), 0.0f);
  UNet<float>::Cache cache;
  double dice0 = 0, dice_last = 0;
  for (const auto& s : batch) {
    if (s.mask.empty()) continue;
    const int steps = 1 + s.edit_steps;
    const double scale = 1.0 / (static_cast<double>(steps) * valid);
    PromptSet prompt = s.prompt;
    std::vector<PointPrompt> points = s.prompt.points;
    for (int e = 0; e < steps; ++e) {
      const auto logits = model_.forward(s.image, encode_prompts(prompt, cfg), &cache);
      Tensor<float> dl(logits.channels, logits.height, logits.width);
      const auto ml = multimask_loss(logits, s.mask, &dl, scale);
      model_.backward(cache, dl, grads);
      m.loss += ml.total * scale;
      const Mask2D pred = ModelOutput{logits}.primary();
      if (e == 0) dice0 += dice(pred, s.mask);
      if (e == steps - 1) dice_last += dice(pred, s.mask);
      if (e + 1 < steps) {
        const auto cp = gen_correction_point(
            pred, s.mask, derive_seed(s.seed, {tag(Stream::correction), static_cast<std::uint64_t>(e)}));
        if (cp) points.push_back(*cp);
        prompt = PromptSet{};
        prompt.mask = resample_nearest(pred, cfg.low_res, cfg.low_res);
        prompt.points = points;
      }
    }
  }
  m.dice_step0 = dice0 / valid;
  if (config_.use_edit_training) m.dice_after_edits = dice_last / valid;
  auto& params = model_.params().values;
  m.grad_norm = adam_.step(params, grads);
  ++step_;
  return m;
}

void Trainer::run(const TrainingSet& data, std::uint64_t until,
                  const std::function<void(const StepMetrics&)>& on_step) {
  if (step_ >= until) return;
  if (!config_.prefetch) {
    while (step_ < until) {
      const auto m = train_step(make_batch(data, step_));
      if (on_step) on_step(m);
    }
    return;
  }
  BoundedQueue<std::vector<PreparedSample>> queue(2);
  const std::uint64_t first = step_;
  std::thread producer([&] {
    try {
      for (std::uint64_t s = first; s < until; ++s) queue.push(make_batch(data, s));
    } catch (...) {
      queue.push({});  // surfaces as an empty batch below
    }
  });
  try {
    while (step_ < until) {
      auto batch = queue.pop();
      if (batch.empty()) throw std::runtime_error("batch preparation failed");
      const auto m = train_step(batch);
      if (on_step) on_step(m);
    }
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  producer.join();
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = model_.config();
  c.step = step_;
  c.params = model_.params();
  c.adam = AdamState{adam_.t(), adam_.m(), adam_.v()};
  return c;
}

nlohmann::ordered_json metrics_json(const StepMetrics& m) {
  nlohmann::ordered_json j = {{"step", m.step}, {"loss", m.loss}, {"dice_step0", m.dice_step0}};
  if (m.dice_after_edits) j["dice_after_edits"] = *m.dice_after_edits;
  return j;
}

}  // namespace voxprompt::net

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxprompt/net/augment.hpp"
#include "voxprompt/net/checkpoint.hpp"
#include "voxprompt/net/optim.hpp"
#include "voxprompt/net/unet.hpp"
#include "voxprompt/prompts.hpp"
#include "voxprompt/volume_io.hpp"

namespace voxprompt::net {

enum class PromptKind { point, box, mask };
std::string to_string(PromptKind k);

struct TrainConfig {
  int batch_size = 8;
  double lr = 1e-3;
  int steps = 1000;
  int edit_steps_min = 0;
  int edit_steps_max = 4;
  AugmentConfig augment;
  bool use_mask_prompt = true;
  bool use_edit_training = true;
  double clip_norm = 1.0;
  bool prefetch = true;  // prepare the next batch on a worker thread
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);

// One (volume, slice, class) training example.
struct SampleRef {
  int volume = 0;
  int slice = 0;
  std::int32_t class_id = 0;
};

// Slices resized and padded to the model grid, kept in HU so the window can
// be jittered per sample.
class TrainingSet {
 public:
  explicit TrainingSet(int image_size) : image_size_(image_size) {}

  static TrainingSet from_manifest(const std::filesystem::path& manifest,
                                   int image_size, std::size_t min_pixels = 15);

  // Adds every (slice, class) whose label mask passes keep_slice.
  void add_volume(const Volume& volume, const LabelVolume& labels,
                  std::vector<std::int32_t> class_ids, std::size_t min_pixels = 15);

  int image_size() const { return image_size_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t volume_count() const { return slices_.size(); }
  const SampleRef& ref(std::size_t i) const { return samples_[i]; }
  const Field2D& hu(std::size_t i) const {
    return slices_[samples_[i].volume][samples_[i].slice];
  }
  const Mask2D& mask(std::size_t i) const { return masks_[i]; }

 private:
  int image_size_;
  std::vector<std::vector<Field2D>> slices_;
  std::vector<SampleRef> samples_;
  std::vector<Mask2D> masks_;
};

// A sample after augmentation and initial-prompt sampling.
struct PreparedSample {
  Tensor<float> image;  // (1, S, S)
  Mask2D mask;          // S x S; empty = skipped
  PromptKind kind = PromptKind::point;
  PromptSet prompt;
  int edit_steps = 0;
  std::uint64_t seed = 0;
};

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  double dice_step0 = 0.0;
  std::optional<double> dice_after_edits;
  int samples = 0;
  int skipped = 0;
  double grad_norm = 0.0;
};

// {step, loss, dice_step0[, dice_after_edits]}
nlohmann::ordered_json metrics_json(const StepMetrics& m);

class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& config);
  // Resumes parameters, optimizer state and step counter.
  Trainer(const Checkpoint& ckpt, const TrainConfig& config);

  std::vector<PreparedSample> make_batch(const TrainingSet& data,
                                         std::uint64_t step) const;
  PreparedSample prepare(const Field2D& hu, const Mask2D& mask,
                         std::uint64_t sample_seed) const;

  // One optimizer update. Advances the step counter.
  StepMetrics train_step(const std::vector<PreparedSample>& batch);

  // Trains until step() == until.
  void run(const TrainingSet& data, std::uint64_t until,
           const std::function<void(const StepMetrics&)>& on_step = {});

  Checkpoint checkpoint() const;
  const UNet<float>& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t skipped_total() const { return skipped_; }

 private:
  TrainConfig config_;
  UNet<float> model_;
  Adam adam_;
  std::uint64_t step_ = 0;
  std::uint64_t skipped_ = 0;
};

}  // namespace voxprompt::net

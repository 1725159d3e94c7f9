#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxprompt/segmenter.hpp"

namespace voxprompt {

struct Boundaries {
  int bottom = 0;
  int top = 0;
  bool contains(int z) const { return z >= bottom && z <= top; }
  friend bool operator==(const Boundaries&, const Boundaries&) = default;
};

enum class ForwardingMode { mask, bbox };
std::string to_string(ForwardingMode m);
ForwardingMode forwarding_mode_from_string(const std::string& s);

// Native slice prompts (points/box in slice pixels, mask on the slice grid or
// already on the low-res grid) mapped onto the model grid.
PromptSet to_model_prompt(const PromptSet& native, const PadInfo& pad, int low_res);

// Binarised primary mask on the native grid.
Mask2D segment_slice(const Segmenter& model, const SliceImage& image,
                     const PromptSet& native_prompt, int slice);

struct SliceEvent {
  int slice = 0;
  std::string what;  // "prompt", "forward", "edit", "select", "empty", "stop"
};

// Propagation state for one object in one volume. Mutations are not
// thread-safe; callers serialise them.
class Session {
 public:
  Session(std::shared_ptr<const Segmenter> model, std::shared_ptr<const Volume> volume,
          Boundaries bounds, ForwardingMode mode, WindowSpec window = {});

  // Segments `slice` from the prompt and sweeps up then down to the bounds.
  void prompt(int slice, const PromptSet& native_prompt);
  // Stores the point, re-runs `slice` with its previous mask plus all of its
  // points, then re-propagates both ways.
  void apply_edit(int slice, const PointPrompt& point);
  // Replaces the slice mask with secondary head 1..3 and re-propagates.
  void select_alternative(int slice, int head);

  bool has_prediction() const { return has_prediction_; }
  const Mask3D& prediction() const { return prediction_; }
  // Secondary masks (heads 1..3) from the slice's latest model call.
  std::array<Mask2D, 3> alternatives(int slice) const;
  const std::vector<PointPrompt>& points(int slice) const { return points_.at(slice); }
  const std::vector<SliceEvent>& log() const { return log_; }

  std::uint64_t revision() const { return revision_; }
  const Boundaries& boundaries() const { return bounds_; }
  ForwardingMode mode() const { return mode_; }
  const Volume& volume() const { return *volume_; }
  const SliceImage& image(int slice) const { return images_.at(slice); }

 private:
  void check_slice(int slice) const;
  void run(int slice, const PromptSet& native_prompt, const char* what);
  void sweep(int from, int dir);
  PromptSet forwarded(int slice, const Mask2D& prev) const;

  std::shared_ptr<const Segmenter> model_;
  std::shared_ptr<const Volume> volume_;
  Boundaries bounds_;
  ForwardingMode mode_;
  std::vector<SliceImage> images_;
  Mask3D prediction_;
  std::vector<std::optional<SlicePrediction>> last_;
  std::vector<std::vector<PointPrompt>> points_;
  std::vector<SliceEvent> log_;
  std::uint64_t revision_ = 0;
  bool has_prediction_ = false;
};

Mask3D propagate_volume(std::shared_ptr<const Segmenter> model,
                        std::shared_ptr<const Volume> volume, int slice,
                        const PromptSet& native_prompt, Boundaries bounds,
                        ForwardingMode mode, WindowSpec window = {});

struct OracleChoice {
  int secondary = 0;  // 0..2 among the secondaries
  int head = 1;       // 1..3
  double dice = 0.0;
  Mask2D mask;
};

// Best secondary mask against the truth; ties go to the lowest index.
OracleChoice oracle_select(const SlicePrediction& prediction, const Mask2D& truth);

}  // namespace voxprompt

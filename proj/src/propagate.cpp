#include "voxprompt/propagate.hpp"

#include <stdexcept>

namespace voxprompt {

std::string to_string(ForwardingMode m) { return m == ForwardingMode::mask ? "mask" : "bbox"; }

ForwardingMode forwarding_mode_from_string(const std::string& s) {
  if (s == "mask") return ForwardingMode::mask;
  if (s == "bbox") return ForwardingMode::bbox;
  throw std::invalid_argument("forwarding mode must be mask or bbox, got '" + s + "'");
}

PromptSet to_model_prompt(const PromptSet& native, const PadInfo& pad, int low_res) {
  PromptSet out;
  for (const auto& p : native.points) {
    if (p.position.row < 0 || p.position.col < 0 || p.position.row >= pad.source_height ||
        p.position.col >= pad.source_width)
      throw std::invalid_argument("point (" + std::to_string(p.position.row) + "," +
                                  std::to_string(p.position.col) + ") outside the slice");
    out.points.push_back({pad.to_model(p.position), p.positive});
  }
  if (native.box) {
    const Box& b = *native.box;
    if (b.row_min < 0 || b.col_min < 0 || b.row_max >= pad.source_height ||
        b.col_max >= pad.source_width || b.row_min > b.row_max || b.col_min > b.col_max)
      throw std::invalid_argument("box outside the slice");
    out.box = pad.to_model(b);
  }
  if (native.mask) {
    const Mask2D& m = *native.mask;
    if (m.height() == pad.source_height && m.width() == pad.source_width)
      out.mask = resample_nearest(resize_pad_mask(m, pad), low_res, low_res);
    else if (m.height() == low_res && m.width() == low_res)
      out.mask = m;
    else
      throw ShapeError("mask prompt must match the slice or the low-res grid");
  }
  return out;
}

Mask2D segment_slice(const Segmenter& model, const SliceImage& image,
                     const PromptSet& native_prompt, int slice) {
  const auto p = to_model_prompt(native_prompt, image.pad, model.config().low_res);
  return model.predict(image, p, slice).primary();
}

Session::Session(std::shared_ptr<const Segmenter> model, std::shared_ptr<const Volume> volume,
                 Boundaries bounds, ForwardingMode mode, WindowSpec window)
    : model_(std::move(model)), volume_(std::move(volume)), bounds_(bounds), mode_(mode) {
  if (!model_ || !volume_) throw std::invalid_argument("session needs a model and a volume");
  const auto& d = volume_->dims();
  if (bounds_.bottom < 0 || bounds_.top >= d.z || bounds_.bottom > bounds_.top)
    throw std::invalid_argument("boundaries (" + std::to_string(bounds_.bottom) + "," +
                                std::to_string(bounds_.top) + ") invalid for " +
                                std::to_string(d.z) + " slices");
  validate(window);
  const int S = model_->config().image_size;
  images_.resize(d.z);
  for (int z = bounds_.bottom; z <= bounds_.top; ++z)
    images_[z] = resize_pad(window_normalize(volume_->slice(z), window), S);
  prediction_ = Mask3D(d.z, d.y, d.x);
  last_.resize(d.z);
  points_.resize(d.z);
}

void Session::check_slice(int slice) const {
  if (!bounds_.contains(slice))
    throw std::out_of_range("slice " + std::to_string(slice) + " outside boundaries (" +
                            std::to_string(bounds_.bottom) + "," +
                            std::to_string(bounds_.top) + ")");
}

void Session::run(int z, const PromptSet& native_prompt, const char* what) {
  const auto p = to_model_prompt(native_prompt, images_[z].pad, model_->config().low_res);
  auto pred = model_->predict(images_[z], p, z);
  prediction_.set_slice(z, pred.primary());
  last_[z] = std::move(pred);
  log_.push_back({z, what});
}

PromptSet Session::forwarded(int z, const Mask2D& prev) const {
  PromptSet p;
  if (mode_ == ForwardingMode::mask) {
    p.mask = prev;
  } else {
    p.box = *bbox_of(prev);
  }
  p.points = points_[z];
  return p;
}

void Session::sweep(int from, int dir) {
  bool stopped = false;
  for (int z = from + dir; bounds_.contains(z); z += dir) {
    const Mask2D prev = prediction_.slice(z - dir);
    if (!stopped && mode_ == ForwardingMode::bbox && prev.empty()) {
      stopped = true;
      log_.push_back({z, "stop"});
    }
    if (stopped) {
      prediction_.clear_slice(z);
      last_[z].reset();
      continue;
    }
    if (prev.empty()) log_.push_back({z, "empty"});
    run(z, forwarded(z, prev), "forward");
  }
}

void Session::prompt(int slice, const PromptSet& native_prompt) {
  check_slice(slice);
  if (native_prompt.empty()) throw std::invalid_argument("prompt is empty");
  prediction_ = Mask3D(prediction_.depth(), prediction_.height(), prediction_.width());
  for (auto& l : last_) l.reset();
  run(slice, native_prompt, "prompt");
  sweep(slice, +1);
  sweep(slice, -1);
  has_prediction_ = true;
  ++revision_;
}

void Session::apply_edit(int slice, const PointPrompt& point) {
  check_slice(slice);
  if (!has_prediction_) throw std::logic_error("edit before any prompt");
  const auto& d = volume_->dims();
  if (point.position.row < 0 || point.position.col < 0 || point.position.row >= d.y ||
      point.position.col >= d.x)
    throw std::invalid_argument("edit point outside the slice");
  points_[slice].push_back(point);
  PromptSet p;
  p.mask = prediction_.slice(slice);
  p.points = points_[slice];
  run(slice, p, "edit");
  sweep(slice, +1);
  sweep(slice, -1);
  ++revision_;
}

void Session::select_alternative(int slice, int head) {
  check_slice(slice);
  if (head < 1 || head > 3) throw std::invalid_argument("mask_index must be 1, 2 or 3");
  if (!last_[slice]) throw std::logic_error("slice has no model output to choose from");
  prediction_.set_slice(slice, last_[slice]->masks[head]);
  log_.push_back({slice, "select"});
  sweep(slice, +1);
  sweep(slice, -1);
  ++revision_;
}

std::array<Mask2D, 3> Session::alternatives(int slice) const {
  check_slice(slice);
  std::array<Mask2D, 3> out;
  const auto& d = volume_->dims();
  for (int k = 0; k < 3; ++k)
    out[k] = last_[slice] ? last_[slice]->masks[k + 1] : Mask2D(d.y, d.x);
  return out;
}

Mask3D propagate_volume(std::shared_ptr<const Segmenter> model,
                        std::shared_ptr<const Volume> volume, int slice,
                        const PromptSet& native_prompt, Boundaries bounds,
                        ForwardingMode mode, WindowSpec window) {
  Session s(std::move(model), std::move(volume), bounds, mode, window);
  s.prompt(slice, native_prompt);
  return s.prediction();
}

OracleChoice oracle_select(const SlicePrediction& prediction, const Mask2D& truth) {
  OracleChoice best;
  best.dice = -1.0;
  for (int k = 0; k < 3; ++k) {
    const double d = dice(prediction.masks[k + 1], truth);
    if (d > best.dice) {
      best.secondary = k;
      best.head = k + 1;
      best.dice = d;
    }
  }
  best.mask = prediction.masks[best.head];
  return best;
}

}  // namespace voxprompt

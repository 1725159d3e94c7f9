#include "voxprompt/net/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxprompt/net/loss.hpp"
#include "voxprompt/net/prompt_encoding.hpp"
#include "voxprompt/net/unet.hpp"
#include "voxprompt/rng.hpp"

namespace voxprompt::net {

namespace {

struct Item {
  Tensor<double> image;
  Tensor<double> prompt;
  Mask2D gt;
};

std::vector<Item> random_batch(const GradCheckConfig& c) {
  const int S = c.model.image_size;
  Rng rng(c.seed, {tag(Stream::sampling), 0x6C});
  std::vector<Item> batch;
  for (int b = 0; b < c.batch; ++b) {
    Item it;
    it.image = Tensor<double>(1, S, S);
    for (auto& v : it.image.data) v = rng.uniform(0.0, 1.0);
    it.gt = Mask2D(S, S);
    const double cr = rng.uniform(S * 0.3, S * 0.7), cc = rng.uniform(S * 0.3, S * 0.7);
    const double rr = rng.uniform(S * 0.15, S * 0.3), rc = rng.uniform(S * 0.15, S * 0.3);
    for (int r = 0; r < S; ++r)
      for (int col = 0; col < S; ++col) {
        const double y = (r - cr) / rr, x = (col - cc) / rc;
        if (y * y + x * x <= 1.0) it.gt.set(r, col);
      }
    PromptSet p;
    if (b % 2 == 0) {
      p.points.push_back({{static_cast<int>(cr), static_cast<int>(cc)}, true});
      p.box = *bbox_of(it.gt);
    } else {
      p.mask = resample_nearest(it.gt, c.model.low_res, c.model.low_res);
      p.points.push_back({{0, 0}, false});
    }
    it.prompt = encode_prompts(p, c.model).cast<double>();
    batch.push_back(std::move(it));
  }
  return batch;
}

void randomize(UNet<double>& net, std::uint64_t seed) {
  Rng rng(seed, {tag(Stream::init), 0x6C});
  for (const auto& e : net.params().entries) {
    const bool bias = e.shape.size() == 1;
    const double fan_in = bias ? 1.0 : static_cast<double>(e.shape[1] * e.shape[2] * e.shape[3]);
    const double sd = bias ? 0.1 : std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < e.count; ++i)
      net.params().values[e.offset + i] = rng.normal(0.0, sd);
  }
}

double batch_loss(const UNet<double>& net, const std::vector<Item>& batch,
                  std::vector<double>* grads) {
  double total = 0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  UNet<double>::Cache cache;
  for (const auto& it : batch) {
    const auto logits = net.forward(it.image, it.prompt, grads ? &cache : nullptr);
    Tensor<double> dl(logits.channels, logits.height, logits.width);
    total += scale * multimask_loss(logits, it.gt, grads ? &dl : nullptr, scale).total;
    if (grads) net.backward(cache, dl, *grads);
  }
  return total;
}

double central(UNet<double>& net, const std::vector<Item>& batch, std::size_t i,
               double h) {
  auto& v = net.params().values;
  const double orig = v[i];
  v[i] = orig + h;
  const double up = batch_loss(net, batch, nullptr);
  v[i] = orig - h;
  const double down = batch_loss(net, batch, nullptr);
  v[i] = orig;
  return (up - down) / (2.0 * h);
}

}  // namespace

GradCheckResult grad_check(const GradCheckConfig& c) {
  UNet<double> net(c.model);
  randomize(net, c.seed);
  const auto batch = random_batch(c);

  GradCheckResult r;
  r.parameter_count = net.parameter_count();
  std::vector<double> grads(net.parameter_count(), 0.0);
  r.loss = batch_loss(net, batch, &grads);

  std::vector<std::size_t> idx(net.parameter_count());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(c.seed, {tag(Stream::sampling), 0x6D});
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(c.parameters)));

  std::vector<double> ratios;
  for (auto i : idx) {
    const double a = grads[i];
    const double n = central(net, batch, i, c.eps);
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradFloor});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;

    const double e1 = central(net, batch, i, c.richardson_eps) - a;
    const double e2 = central(net, batch, i, 10.0 * c.richardson_eps) - a;
    // Skip probes where truncation error is buried in rounding noise.
    if (std::abs(e1) > 1e-9) ratios.push_back(std::abs(e2) / std::abs(e1));
  }
  r.richardson_used = ratios.size();
  if (!ratios.empty()) {
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    r.richardson_ratio = ratios[ratios.size() / 2];
  }
  return r;
}

double stationary_gradient_norm(const GradCheckConfig& c) {
  UNet<double> net(c.model);
  randomize(net, c.seed);
  // Head weights zero and biases large: every pixel predicts foreground.
  const auto* w = net.params().find("head.weight");
  const auto* b = net.params().find("head.bias");
  std::fill_n(net.params().values.begin() + w->offset, w->count, 0.0);
  std::fill_n(net.params().values.begin() + b->offset, b->count, 30.0);
  auto batch = random_batch(c);
  for (auto& it : batch) std::fill(it.gt.bits().begin(), it.gt.bits().end(), 1);
  std::vector<double> grads(net.parameter_count(), 0.0);
  batch_loss(net, batch, &grads);
  double sq = 0;
  for (double g : grads) sq += g * g;
  return std::sqrt(sq);
}

}  // namespace voxprompt::net

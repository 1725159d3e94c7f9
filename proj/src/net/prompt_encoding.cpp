#include "voxprompt/net/prompt_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace voxprompt::net {

namespace {

// Pixel-centre mapping from the image grid to the prompt grid.
double to_grid(int pixel, double ratio) { return (pixel + 0.5) * ratio - 0.5; }

void splat(Tensor<float>& t, int channel, double gr, double gc) {
  const int n = t.height;
  // Peak-normalise on the grid so the nearest cell reads exactly 1.
  const int nr = std::clamp(static_cast<int>(std::lround(gr)), 0, n - 1);
  const int nc = std::clamp(static_cast<int>(std::lround(gc)), 0, n - 1);
  auto bump = [&](int r, int c) {
    const double d2 = (r - gr) * (r - gr) + (c - gc) * (c - gc);
    return std::exp(-d2 / (2.0 * kPointSigma * kPointSigma));
  };
  const double peak = bump(nr, nc);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const float v = static_cast<float>(bump(r, c) / peak);
      float& dst = t(channel, r, c);
      dst = std::max(dst, v);
    }
}

}  // namespace

Tensor<float> encode_prompts(const PromptSet& prompts, const ModelConfig& config) {
  if (prompts.empty()) throw std::invalid_argument("encode_prompts: empty prompt set");
  const int S = config.image_size;
  const int n = config.low_res;
  const double ratio = static_cast<double>(n) / S;
  Tensor<float> t(kPromptChannels, n, n);

  if (prompts.mask) {
    const Mask2D m = prompts.mask->height() == n && prompts.mask->width() == n
                         ? *prompts.mask
                         : resample_nearest(*prompts.mask, n, n);
    auto bits = m.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) t.data[i] = bits[i] ? 1.0f : 0.0f;
  }

  for (const auto& p : prompts.points) {
    if (p.position.row < 0 || p.position.col < 0 || p.position.row >= S ||
        p.position.col >= S)
      throw std::invalid_argument("encode_prompts: point outside the image");
    splat(t, p.positive ? 1 : 2, to_grid(p.position.row, ratio),
          to_grid(p.position.col, ratio));
  }

  if (prompts.box) {
    const Box& b = *prompts.box;
    if (b.row_min < 0 || b.col_min < 0 || b.row_max >= S || b.col_max >= S ||
        b.row_min > b.row_max || b.col_min > b.col_max)
      throw std::invalid_argument("encode_prompts: box outside the image");
    // Cell i spans pixels [i*S/n, (i+1)*S/n).
    auto cell_lo = [&](int px) { return static_cast<int>(std::floor(px * ratio)); };
    const int r0 = cell_lo(b.row_min), r1 = cell_lo(b.row_max);
    const int c0 = cell_lo(b.col_min), c1 = cell_lo(b.col_max);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) t(3, r, c) = 1.0f;
  }
  return t;
}

}  // namespace voxprompt::net

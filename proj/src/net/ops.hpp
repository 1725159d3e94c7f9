#pragma once

// Building blocks for UNet: 3x3/1x1 convolution via im2col + GEMM, ELU,
// 2x2 max pooling, nearest 2x upsampling and channel concatenation.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "voxprompt/net/tensor.hpp"

namespace voxprompt::net::ops {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// col[(c*9 + ky*3 + kx), y*W + x] = in[c, y+ky-1, x+kx-1] (zero outside).
template <class T>
void im2col3x3(const Tensor<T>& in, std::vector<T>& col) {
  const int C = in.channels, H = in.height, W = in.width;
  const std::size_t hw = in.plane();
  col.resize(static_cast<std::size_t>(C) * 9 * hw);
  for (int c = 0; c < C; ++c) {
    const T* src = in.channel(c);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        const int dx = kx - 1;
        for (int y = 0; y < H; ++y) {
          T* row = dst + static_cast<std::size_t>(y) * W;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) {
            std::fill(row, row + W, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * W;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(W, W - dx);
          std::fill(row, row + x0, T(0));
          std::memcpy(row + x0, srow + x0 + dx, sizeof(T) * (x1 - x0));
          std::fill(row + x1, row + W, T(0));
        }
      }
  }
}

// Adjoint of im2col3x3; accumulates into out.
template <class T>
void col2im3x3(const std::vector<T>& col, Tensor<T>& out) {
  const int C = out.channels, H = out.height, W = out.width;
  const std::size_t hw = out.plane();
  for (int c = 0; c < C; ++c) {
    T* dstc = out.channel(c);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const T* row = src + static_cast<std::size_t>(y) * W;
          T* drow = dstc + static_cast<std::size_t>(sy) * W;
          for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
        }
      }
  }
}

template <class Conv, class T>
Tensor<T> conv_forward(const Conv& cv, const std::vector<T>& params,
                       const Tensor<T>& in, std::vector<T>& scratch) {
  if (in.channels != cv.cin)
    throw ShapeError("conv: expected " + std::to_string(cv.cin) +
                     " input channels, got " + std::to_string(in.channels));
  Tensor<T> out(cv.cout, in.height, in.width);
  const auto hw = static_cast<Eigen::Index>(in.plane());
  const Eigen::Index k = static_cast<Eigen::Index>(cv.cin) * cv.kernel * cv.kernel;
  CMapMat<T> w(params.data() + cv.weight, cv.cout, k);
  MapMat<T> y(out.data.data(), cv.cout, hw);
  if (cv.kernel == 3) {
    im2col3x3(in, scratch);
    CMapMat<T> col(scratch.data(), k, hw);
    y.noalias() = w * col;
  } else {
    CMapMat<T> col(in.data.data(), k, hw);
    y.noalias() = w * col;
  }
  for (int o = 0; o < cv.cout; ++o) {
    const T b = params[cv.bias + o];
    T* row = out.channel(o);
    for (Eigen::Index i = 0; i < hw; ++i) row[i] += b;
  }
  return out;
}

// Returns d(in) unless need_input_grad is false (then an empty tensor).
template <class Conv, class T>
Tensor<T> conv_backward(const Conv& cv, const std::vector<T>& params,
                        const Tensor<T>& in, const Tensor<T>& dout,
                        std::vector<T>& grads, std::vector<T>& scratch,
                        bool need_input_grad = true) {
  const auto hw = static_cast<Eigen::Index>(in.plane());
  const Eigen::Index k = static_cast<Eigen::Index>(cv.cin) * cv.kernel * cv.kernel;
  CMapMat<T> w(params.data() + cv.weight, cv.cout, k);
  MapMat<T> dw(grads.data() + cv.weight, cv.cout, k);
  CMapMat<T> dy(dout.data.data(), cv.cout, hw);
  for (int o = 0; o < cv.cout; ++o) {
    const T* row = dout.channel(o);
    T s = 0;
    for (Eigen::Index i = 0; i < hw; ++i) s += row[i];
    grads[cv.bias + o] += s;
  }
  Tensor<T> din;
  if (cv.kernel == 3) {
    im2col3x3(in, scratch);
    CMapMat<T> col(scratch.data(), k, hw);
    dw.noalias() += dy * col.transpose();
    if (need_input_grad) {
      std::vector<T> dcol(static_cast<std::size_t>(k * hw));
      MapMat<T> dc(dcol.data(), k, hw);
      dc.noalias() = w.transpose() * dy;
      din = Tensor<T>(in.channels, in.height, in.width);
      col2im3x3(dcol, din);
    }
  } else {
    CMapMat<T> col(in.data.data(), k, hw);
    dw.noalias() += dy * col.transpose();
    if (need_input_grad) {
      din = Tensor<T>(in.channels, in.height, in.width);
      MapMat<T> dc(din.data.data(), k, hw);
      dc.noalias() = w.transpose() * dy;
    }
  }
  return din;
}

template <class T>
void elu_inplace(Tensor<T>& t) {
  for (auto& v : t.data) v = v > T(0) ? v : std::expm1(v);
}

// Multiplies grad by ELU'(x) expressed through the output y.
template <class T>
void elu_backward_inplace(const Tensor<T>& y, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(y.data[i] > T(0))) grad.data[i] *= (y.data[i] + T(1));
}

template <class T>
Tensor<T> maxpool2(const Tensor<T>& in, std::vector<int>& argmax) {
  const int H = in.height / 2, W = in.width / 2;
  Tensor<T> out(in.channels, H, W);
  argmax.resize(out.size());
  std::size_t o = 0;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x, ++o) {
        int best = -1;
        T bv = T(0);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = static_cast<int>(in.plane() * c) +
                            (2 * y + dy) * in.width + (2 * x + dx);
            if (best < 0 || in.data[idx] > bv) {
              best = idx;
              bv = in.data[idx];
            }
          }
        out.data[o] = bv;
        argmax[o] = best;
      }
  return out;
}

template <class T>
void maxpool2_backward(const Tensor<T>& dout, const std::vector<int>& argmax,
                       Tensor<T>& din) {
  for (std::size_t o = 0; o < dout.data.size(); ++o) din.data[argmax[o]] += dout.data[o];
}

template <class T>
Tensor<T> upsample2(const Tensor<T>& in) {
  Tensor<T> out(in.channels, in.height * 2, in.width * 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) out(c, y, x) = in(c, y / 2, x / 2);
  return out;
}

template <class T>
Tensor<T> upsample2_backward(const Tensor<T>& dout) {
  Tensor<T> din(dout.channels, dout.height / 2, dout.width / 2);
  for (int c = 0; c < dout.channels; ++c)
    for (int y = 0; y < dout.height; ++y)
      for (int x = 0; x < dout.width; ++x) din(c, y / 2, x / 2) += dout(c, y, x);
  return din;
}

template <class T>
Tensor<T> concat(std::initializer_list<const Tensor<T>*> parts) {
  int c = 0;
  const Tensor<T>* first = *parts.begin();
  for (const auto* p : parts) {
    if (p->height != first->height || p->width != first->width)
      throw ShapeError("concat: spatial sizes differ");
    c += p->channels;
  }
  Tensor<T> out(c, first->height, first->width);
  auto it = out.data.begin();
  for (const auto* p : parts) it = std::copy(p->data.begin(), p->data.end(), it);
  return out;
}

// Splits off the first `channels` channels of t.
template <class T>
Tensor<T> take_channels(const Tensor<T>& t, int first, int channels) {
  Tensor<T> out(channels, t.height, t.width);
  std::copy(t.channel(first), t.channel(first) + out.size(), out.data.begin());
  return out;
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace voxprompt::net::ops

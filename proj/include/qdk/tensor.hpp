// Copyright 2026 The QDK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense float tensors and the float compute kernels (matmul, convolution,
// depthwise convolution, global average pooling) together with the
// gradients the training code needs. Layout is row-major NCHW throughout;
// all reductions accumulate in double and store float.

#ifndef QDK_TENSOR_HPP_
#define QDK_TENSOR_HPP_

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qdk/error.hpp"

namespace qdk {

class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() == 0 || dims.size() > kMaxRank) {
      throw ShapeError("rank must be in [1, 4], got " +
                       std::to_string(dims.size()));
    }
    for (int d : dims) dims_[rank_++] = d;
    Validate();
  }
  explicit Shape(std::span<const int> dims) {
    if (dims.empty() || dims.size() > kMaxRank) {
      throw ShapeError("rank must be in [1, 4], got " +
                       std::to_string(dims.size()));
    }
    for (int d : dims) dims_[rank_++] = d;
    Validate();
  }

  int rank() const noexcept { return rank_; }
  int operator[](int i) const noexcept { return dims_[i]; }
  std::span<const int> dims() const noexcept { return {dims_.data(), static_cast<std::size_t>(rank_)}; }

  std::size_t numel() const noexcept {
    std::size_t n = rank_ == 0 ? 0 : 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
    return n;
  }

  std::string ToString() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += "x";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    if (a.rank_ != b.rank_) return false;
    for (int i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  void Validate() const {
    for (int i = 0; i < rank_; ++i) {
      if (dims_[i] < 1) {
        throw ShapeError("dimension sizes must be >= 1, got " + ToString());
      }
    }
  }

  std::array<int, kMaxRank> dims_{};
  int rank_ = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(shape.numel(), 0.0f) {}
  Tensor(Shape shape, std::vector<float> data)
      : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor of shape " + shape_.ToString() + " needs " +
                       std::to_string(shape_.numel()) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  static Tensor Filled(Shape shape, float value) {
    return Tensor(shape, std::vector<float>(shape.numel(), value));
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return shape_.rank(); }
  int dim(int i) const noexcept { return shape_[i]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const float* ptr() const noexcept { return data_.data(); }
  float* ptr() noexcept { return data_.data(); }

  float operator[](std::size_t i) const noexcept { return data_[i]; }
  float& operator[](std::size_t i) noexcept { return data_[i]; }

  // Row-major element access for rank-2 and rank-4 tensors.
  float at(int i, int j) const noexcept {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  float at(int n, int c, int h, int w) const noexcept {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
                     shape_[3] +
                 w];
  }

  Tensor Reshaped(Shape shape) const {
    if (shape.numel() != data_.size()) {
      throw ShapeError("cannot reshape " + shape_.ToString() + " to " +
                       shape.ToString());
    }
    Tensor t = *this;
    t.shape_ = shape;
    return t;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Geometry of a 2D convolution over one sample.
struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;

  int out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  int patch() const { return in_channels * kernel_h * kernel_w; }
  bool pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0;
  }

  // Throws ShapeError unless both output extents are positive integers.
  void Check() const {
    if (stride < 1 || padding < 0) {
      throw ShapeError("stride must be >= 1 and padding >= 0");
    }
    const int eh = in_h + 2 * padding - kernel_h;
    const int ew = in_w + 2 * padding - kernel_w;
    if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0) {
      throw ShapeError(
          "non-integral convolution output size for input " +
          std::to_string(in_h) + "x" + std::to_string(in_w) + ", kernel " +
          std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
          ", stride " + std::to_string(stride) + ", padding " +
          std::to_string(padding));
    }
  }
};

namespace detail {

// Register tile: rows [i0, i0 + R) x columns [j0, j0 + W), full depth k.
template <int R, int W>
inline void GemmTile(int n, int k, const float* a, const float* b, float* c, int i0, int j0,
                     bool accumulate) {
  double acc[R][W] = {};
  for (int p = 0; p < k; ++p) {
    const float* brow = b + static_cast<std::size_t>(p) * n + j0;
    double bv[W];
    for (int j = 0; j < W; ++j) bv[j] = brow[j];
    for (int r = 0; r < R; ++r) {
      const double av = a[static_cast<std::size_t>(i0 + r) * k + p];
      for (int j = 0; j < W; ++j) acc[r][j] += av * bv[j];
    }
  }
  for (int r = 0; r < R; ++r) {
    float* crow = c + static_cast<std::size_t>(i0 + r) * n + j0;
    for (int j = 0; j < W; ++j)
      crow[j] = static_cast<float>(accumulate ? crow[j] + acc[r][j] : acc[r][j]);
  }
}

template <int R>
inline void GemmRows(int n, int k, const float* a, const float* b, float* c, int i0,
                     bool accumulate) {
  int j = 0;
  for (; j + 16 <= n; j += 16) GemmTile<R, 16>(n, k, a, b, c, i0, j, accumulate);
  for (; j + 4 <= n; j += 4) GemmTile<R, 4>(n, k, a, b, c, i0, j, accumulate);
  for (; j < n; ++j) GemmTile<R, 1>(n, k, a, b, c, i0, j, accumulate);
}

// C[MxN] = A[MxK] * B[KxN], double accumulation, float result.
// When `accumulate` is set the product is added to C instead. Every output
// element sums its k products in index order, whatever the tiling.
inline void Gemm(int m, int n, int k, const float* a, const float* b, float* c,
                 bool accumulate = false) {
  int i = 0;
  for (; i + 4 <= m; i += 4) GemmRows<4>(n, k, a, b, c, i, accumulate);
  for (; i < m; ++i) GemmRows<1>(n, k, a, b, c, i, accumulate);
}

inline void Transpose(int rows, int cols, const float* src, float* dst) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      dst[static_cast<std::size_t>(j) * rows + i] =
          src[static_cast<std::size_t>(i) * cols + j];
}

// Unfolds one CxHxW sample into a (C*Kh*Kw) x (H'*W') column block of a
// matrix whose rows are `ld` floats apart.
inline void Im2Col(const float* img, const ConvGeometry& g, float* cols, std::size_t ld) {
  const int oh = g.out_h(), ow = g.out_w();
  std::size_t row = 0;
  for (int c = 0; c < g.in_channels; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx, ++row) {
        float* dst = cols + row * ld;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ky - g.padding;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride + kx - g.padding;
            dst[oy * ow + ox] = (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w)
                                    ? plane[iy * g.in_w + ix]
                                    : 0.0f;
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: scatters columns back and adds into img.
inline void Col2Im(const float* cols, const ConvGeometry& g, float* img, std::size_t ld) {
  const int oh = g.out_h(), ow = g.out_w();
  std::size_t row = 0;
  for (int c = 0; c < g.in_channels; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const float* src = cols + row * ld;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ky - g.padding;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride + kx - g.padding;
            if (ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

inline ConvGeometry MakeGeometry(const Tensor& input, const Tensor& weight,
                                 int stride, int padding, bool depthwise) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("convolution expects rank-4 input and weight, got " +
                         input.shape().ToString() + " and " +
                         weight.shape().ToString());
  }
  ConvGeometry g;
  g.in_channels = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (depthwise) {
    if (weight.dim(0) != g.in_channels || weight.dim(1) != 1) {
      throw DimensionError("depthwise weight " + weight.shape().ToString() +
                           " does not match input " + input.shape().ToString());
    }
    g.out_channels = g.in_channels;
  } else {
    if (weight.dim(1) != g.in_channels) {
      throw DimensionError("conv weight " + weight.shape().ToString() +
                           " does not match input " + input.shape().ToString());
    }
    g.out_channels = weight.dim(0);
  }
  g.Check();
  return g;
}

inline void CheckBias(const Tensor& bias, int channels) {
  if (!bias.empty() &&
      (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw DimensionError("bias " + bias.shape().ToString() + " does not match " +
                         std::to_string(channels) + " output channels");
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + a.shape().ToString() +
                         " x " + b.shape().ToString());
  }
  Tensor c(Shape{a.dim(0), b.dim(1)});
  detail::Gemm(a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), c.ptr());
  return c;
}

// Cross-correlation with per-output-channel bias. An empty bias means zero.
// The whole batch is unfolded into one (C*Kh*Kw) x (N*H'*W') matrix.
inline Tensor conv2d(const Tensor& input, const Tensor& weight,
                     const Tensor& bias, int stride, int padding) {
  const ConvGeometry g = detail::MakeGeometry(input, weight, stride, padding, false);
  detail::CheckBias(bias, g.out_channels);
  const int n = input.dim(0), oh = g.out_h(), ow = g.out_w(), p = oh * ow;
  const std::size_t np = static_cast<std::size_t>(n) * p;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  std::vector<float> cols(static_cast<std::size_t>(g.patch()) * np);
  for (int s = 0; s < n; ++s)
    detail::Im2Col(input.ptr() + s * in_stride, g, cols.data() + static_cast<std::size_t>(s) * p, np);
  std::vector<float> y(static_cast<std::size_t>(g.out_channels) * np);
  detail::Gemm(g.out_channels, static_cast<int>(np), g.patch(), weight.ptr(), cols.data(), y.data());
  Tensor out(Shape{n, g.out_channels, oh, ow});
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < g.out_channels; ++c) {
      const float b = bias.empty() ? 0.0f : bias[c];
      const float* src = y.data() + c * np + static_cast<std::size_t>(s) * p;
      float* dst = out.ptr() + (static_cast<std::size_t>(s) * g.out_channels + c) * p;
      for (int i = 0; i < p; ++i) dst[i] = src[i] + b;
    }
  return out;
}

inline Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight,
                               const Tensor& bias, int stride, int padding) {
  const ConvGeometry g = detail::MakeGeometry(input, weight, stride, padding, true);
  detail::CheckBias(bias, g.out_channels);
  const int n = input.dim(0), oh = g.out_h(), ow = g.out_w();
  const int kh = g.kernel_h, kw = g.kernel_w;
  Tensor out(Shape{n, g.in_channels, oh, ow});
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < g.in_channels; ++c) {
      const float* plane = input.ptr() +
          (static_cast<std::size_t>(s) * g.in_channels + c) * g.in_h * g.in_w;
      const float* w = weight.ptr() + static_cast<std::size_t>(c) * kh * kw;
      float* o = out.ptr() + (static_cast<std::size_t>(s) * g.in_channels + c) * oh * ow;
      const double b = bias.empty() ? 0.0 : bias[c];
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * g.stride + ky - g.padding;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * g.stride + kx - g.padding;
              if (ix < 0 || ix >= g.in_w) continue;
              acc += static_cast<double>(plane[iy * g.in_w + ix]) * w[ky * kw + kx];
            }
          }
          o[oy * ow + ox] = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

// [N,C,H,W] -> [N,C]
inline Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4) {
    throw DimensionError("global_avg_pool expects rank 4, got " +
                         input.shape().ToString());
  }
  const int n = input.dim(0), c = input.dim(1);
  const std::size_t hw = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  Tensor out(Shape{n, c});
  for (int i = 0; i < n * c; ++i) {
    double acc = 0.0;
    const float* p = input.ptr() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) acc += p[j];
    out[i] = static_cast<float>(acc / static_cast<double>(hw));
  }
  return out;
}

struct ConvGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

// Gradients of conv2d given dL/d(output). `need_input` skips dL/d(input) for
// the first layer of a network.
inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                                 const Tensor& grad_out, int stride,
                                 int padding, bool need_input = true) {
  const ConvGeometry g = detail::MakeGeometry(input, weight, stride, padding, false);
  const int n = input.dim(0), p = g.out_h() * g.out_w(), k = g.patch();
  const int co = g.out_channels;
  const std::size_t np = static_cast<std::size_t>(n) * p;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  ConvGrads grads;
  grads.weight = Tensor(weight.shape());
  grads.bias = Tensor(Shape{co});

  // dY as a co x (N*P) matrix, matching the unfolded column layout.
  std::vector<float> dy(static_cast<std::size_t>(co) * np);
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < co; ++c) {
      const float* src = grad_out.ptr() + (static_cast<std::size_t>(s) * co + c) * p;
      std::copy(src, src + p, dy.data() + c * np + static_cast<std::size_t>(s) * p);
    }
  for (int c = 0; c < co; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < np; ++i) acc += dy[c * np + i];
    grads.bias[c] = static_cast<float>(acc);
  }

  std::vector<float> cols(static_cast<std::size_t>(k) * np);
  for (int s = 0; s < n; ++s)
    detail::Im2Col(input.ptr() + s * in_stride, g, cols.data() + static_cast<std::size_t>(s) * p, np);
  // dW = dY[co x NP] * X^T[NP x k]
  std::vector<float> cols_t(cols.size());
  detail::Transpose(k, static_cast<int>(np), cols.data(), cols_t.data());
  detail::Gemm(co, k, static_cast<int>(np), dy.data(), cols_t.data(), grads.weight.ptr());

  if (need_input) {
    grads.input = Tensor(input.shape());
    std::vector<float> w_t(static_cast<std::size_t>(k) * co);
    detail::Transpose(co, k, weight.ptr(), w_t.data());
    std::vector<float>& dcols = cols;  // reuse
    detail::Gemm(k, static_cast<int>(np), co, w_t.data(), dy.data(), dcols.data());
    for (int s = 0; s < n; ++s)
      detail::Col2Im(dcols.data() + static_cast<std::size_t>(s) * p, g,
                     grads.input.ptr() + s * in_stride, np);
  }
  return grads;
}

inline ConvGrads depthwise_conv2d_backward(const Tensor& input,
                                           const Tensor& weight,
                                           const Tensor& grad_out, int stride,
                                           int padding, bool need_input = true) {
  const ConvGeometry g = detail::MakeGeometry(input, weight, stride, padding, true);
  const int n = input.dim(0), ch = g.in_channels, oh = g.out_h(), ow = g.out_w();
  const int kh = g.kernel_h, kw = g.kernel_w;
  ConvGrads grads;
  grads.weight = Tensor(weight.shape());
  grads.bias = Tensor(Shape{ch});
  if (need_input) grads.input = Tensor(input.shape());
  std::vector<double> wacc(static_cast<std::size_t>(ch) * kh * kw, 0.0);
  std::vector<double> bacc(ch, 0.0);

  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t plane_off =
          (static_cast<std::size_t>(s) * ch + c) * g.in_h * g.in_w;
      const float* plane = input.ptr() + plane_off;
      const float* dy = grad_out.ptr() + (static_cast<std::size_t>(s) * ch + c) * oh * ow;
      const float* w = weight.ptr() + static_cast<std::size_t>(c) * kh * kw;
      double* dw = wacc.data() + static_cast<std::size_t>(c) * kh * kw;
      float* dx = need_input ? grads.input.ptr() + plane_off : nullptr;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double d = dy[oy * ow + ox];
          bacc[c] += d;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * g.stride + ky - g.padding;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * g.stride + kx - g.padding;
              if (ix < 0 || ix >= g.in_w) continue;
              dw[ky * kw + kx] += d * plane[iy * g.in_w + ix];
              if (dx) dx[iy * g.in_w + ix] += static_cast<float>(d * w[ky * kw + kx]);
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i)
    grads.weight[i] = static_cast<float>(wacc[i]);
  for (int c = 0; c < ch; ++c) grads.bias[c] = static_cast<float>(bacc[c]);
  return grads;
}

inline Tensor global_avg_pool_backward(const Shape& input_shape,
                                       const Tensor& grad_out) {
  Tensor dx(input_shape);
  const std::size_t hw = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
  const float inv = 1.0f / static_cast<float>(hw);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const float v = grad_out[i] * inv;
    std::fill_n(dx.ptr() + i * hw, hw, v);
  }
  return dx;
}

}  // namespace qdk

#endif  // QDK_TENSOR_HPP_

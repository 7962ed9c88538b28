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

// Integer-only kernels. Every output follows
//   q3 = Z3 + 2^-n * M0 * (bias + sum (q1 - Z1) * (q2 - Z2))
// with int32 accumulation and an int64 fixed-point product in requantize().

#ifndef QDK_INT8_KERNELS_HPP_
#define QDK_INT8_KERNELS_HPP_

#include <algorithm>
#include <cstdint>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/quant/scheme.hpp"

namespace qdk {

// Rounding (half away from zero) right shift of a 64-bit product.
inline std::int64_t rounding_shift(std::int64_t value, int shift) {
  if (shift <= 0) return value;
  if (shift >= 63) return 0;  // |value| < 2^62, so |value / 2^shift| < 0.5
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  return value >= 0 ? (value + half) >> shift : -((-value + half) >> shift);
}

inline std::int32_t requantize_raw(std::int32_t acc, const RequantMultiplier& rm) {
  const std::int64_t prod = static_cast<std::int64_t>(acc) * rm.m0_fixed;
  return static_cast<std::int32_t>(rounding_shift(prod, 31 + rm.shift));
}

inline std::uint8_t requantize(std::int32_t acc, const RequantMultiplier& rm, int z3) {
  const std::int64_t q = static_cast<std::int64_t>(z3) + requantize_raw(acc, rm);
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(q, kQuantMin, kQuantMax));
}

inline QuantizedTensor qmatmul(const QuantizedTensor& q1, const QuantizedTensor& q2,
                               const QuantParams& out_qp, const RequantMultiplier& rm) {
  if (q1.shape.rank() != 2 || q2.shape.rank() != 2 || q1.shape[1] != q2.shape[0]) {
    throw DimensionError("qmatmul shape mismatch: " + q1.shape.ToString() + " x " +
                         q2.shape.ToString());
  }
  const int m = q1.shape[0], k = q1.shape[1], n = q2.shape[1];
  const int z1 = q1.qp.zero_point, z2 = q2.qp.zero_point;
  QuantizedTensor out(Shape{m, n}, out_qp);
  std::vector<std::int32_t> acc(n);
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0);
    for (int j = 0; j < k; ++j) {
      const std::int32_t a = static_cast<std::int32_t>(q1.data[i * k + j]) - z1;
      const std::uint8_t* brow = q2.data.data() + static_cast<std::size_t>(j) * n;
      for (int c = 0; c < n; ++c) acc[c] += a * (static_cast<std::int32_t>(brow[c]) - z2);
    }
    for (int c = 0; c < n; ++c)
      out.data[static_cast<std::size_t>(i) * n + c] = requantize(acc[c], rm, out_qp.zero_point);
  }
  return out;
}

namespace detail {

// Writes the requantized accumulator row with the fused ReLU clamp. Same
// arithmetic as requantize(), written branch-free so it vectorizes.
inline void RequantizeRow(const std::int32_t* acc, int count, const QuantizedLayer& l,
                          std::uint8_t* out) {
  const std::int64_t z = l.output_qp.zero_point;
  const std::int64_t lo = l.relu ? z : kQuantMin;
  const std::int64_t m0 = l.multiplier.m0_fixed;
  const int shift = 31 + l.multiplier.shift;
  if (shift <= 0 || shift >= 63) {
    for (int i = 0; i < count; ++i) {
      const std::int64_t q = z + requantize_raw(acc[i], l.multiplier);
      out[i] = static_cast<std::uint8_t>(std::clamp<std::int64_t>(q, lo, kQuantMax));
    }
    return;
  }
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  for (int i = 0; i < count; ++i) {
    const std::int64_t prod = static_cast<std::int64_t>(acc[i]) * m0;
    const std::int64_t sign = prod >> 63;  // 0 or -1
    const std::int64_t mag = (((prod ^ sign) - sign) + half) >> shift;
    const std::int64_t q = z + ((mag ^ sign) - sign);
    out[i] = static_cast<std::uint8_t>(std::min<std::int64_t>(std::max(q, lo), kQuantMax));
  }
}

inline void CheckConvInput(const QuantizedTensor& in, const QuantizedLayer& l) {
  if (in.shape.rank() != 4 || in.shape[1] != l.in_channels) {
    throw DimensionError(std::string(to_string(l.kind)) + ": input " + in.shape.ToString() +
                         " does not have " + std::to_string(l.in_channels) + " channels");
  }
}

}  // namespace detail

// Full and pointwise convolution: output-channel outer loop, receptive field
// inner, contiguous over output pixels.
inline QuantizedTensor qconv2d(const QuantizedTensor& input, const QuantizedLayer& l) {
  detail::CheckConvInput(input, l);
  ConvGeometry g{l.in_channels, l.out_channels, input.shape[2], input.shape[3],
                 l.kernel, l.kernel, l.stride, l.padding};
  g.Check();
  const int n = input.shape[0], oh = g.out_h(), ow = g.out_w(), p = oh * ow, k = g.patch();
  const int zin = input.qp.zero_point;
  QuantizedTensor out(Shape{n, l.out_channels, oh, ow}, l.output_qp);
  const int zw = l.weight_qp.zero_point;
  std::vector<std::int16_t> cols(static_cast<std::size_t>(k) * p);
  std::vector<std::int32_t> acc(p);
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;

  for (int s = 0; s < n; ++s) {
    const std::uint8_t* in = input.data.data() + s * l.in_channels * in_plane;
    // Zero-point-centred im2col; padding contributes (Z - Z) = 0.
    std::size_t row = 0;
    for (int c = 0; c < g.in_channels; ++c) {
      const std::uint8_t* plane = in + c * in_plane;
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        for (int kx = 0; kx < g.kernel_w; ++kx, ++row) {
          std::int16_t* dst = cols.data() + row * p;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride + ky - g.padding;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride + kx - g.padding;
              dst[oy * ow + ox] = (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w)
                  ? static_cast<std::int16_t>(plane[iy * g.in_w + ix] - zin)
                  : std::int16_t{0};
            }
          }
        }
      }
    }
    std::uint8_t* o = out.data.data() + static_cast<std::size_t>(s) * l.out_channels * p;
    for (int oc = 0; oc < l.out_channels; ++oc) {
      std::fill(acc.begin(), acc.end(), l.bias[oc]);
      const std::uint8_t* wrow = l.weight.data() + static_cast<std::size_t>(oc) * k;
      for (int r = 0; r < k; ++r) {
        const std::int32_t wv = static_cast<std::int32_t>(wrow[r]) - zw;
        if (wv == 0) continue;
        const std::int16_t* crow = cols.data() + static_cast<std::size_t>(r) * p;
        for (int i = 0; i < p; ++i) acc[i] += wv * static_cast<std::int32_t>(crow[i]);
      }
      detail::RequantizeRow(acc.data(), p, l, o + static_cast<std::size_t>(oc) * p);
    }
  }
  return out;
}

inline QuantizedTensor qdepthwise_conv2d(const QuantizedTensor& input, const QuantizedLayer& l) {
  detail::CheckConvInput(input, l);
  ConvGeometry g{l.in_channels, l.out_channels, input.shape[2], input.shape[3],
                 l.kernel, l.kernel, l.stride, l.padding};
  g.Check();
  const int n = input.shape[0], ch = l.in_channels, oh = g.out_h(), ow = g.out_w();
  const int kk = l.kernel, st = g.stride, pad = g.padding;
  const int zin = input.qp.zero_point, zw = l.weight_qp.zero_point;
  QuantizedTensor out(Shape{n, ch, oh, ow}, l.output_qp);
  // Zero-point-centred plane with a zero border, so padding contributes 0.
  const int pw = g.in_w + 2 * pad;
  std::vector<std::int16_t> padded(static_cast<std::size_t>(g.in_h + 2 * pad) * pw, 0);
  std::vector<std::int32_t> acc(static_cast<std::size_t>(oh) * ow);
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;

  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < ch; ++c) {
      const std::uint8_t* plane = input.data.data() + (static_cast<std::size_t>(s) * ch + c) * in_plane;
      for (int y = 0; y < g.in_h; ++y) {
        std::int16_t* dst = padded.data() + static_cast<std::size_t>(y + pad) * pw + pad;
        const std::uint8_t* src = plane + static_cast<std::size_t>(y) * g.in_w;
        for (int x = 0; x < g.in_w; ++x) dst[x] = static_cast<std::int16_t>(src[x] - zin);
      }
      const std::uint8_t* w = l.weight.data() + static_cast<std::size_t>(c) * kk * kk;
      std::fill(acc.begin(), acc.end(), l.bias[c]);
      for (int oy = 0; oy < oh; ++oy) {
        std::int32_t* arow = acc.data() + oy * ow;
        for (int ky = 0; ky < kk; ++ky) {
          const std::int16_t* irow = padded.data() + static_cast<std::size_t>(oy * st + ky) * pw;
          for (int kx = 0; kx < kk; ++kx) {
            const std::int32_t wv = static_cast<std::int32_t>(w[ky * kk + kx]) - zw;
            const std::int16_t* in = irow + kx;
            if (st == 1) {
              for (int ox = 0; ox < ow; ++ox) arow[ox] += wv * in[ox];
            } else {
              for (int ox = 0; ox < ow; ++ox) arow[ox] += wv * in[ox * st];
            }
          }
        }
      }
      detail::RequantizeRow(acc.data(), oh * ow, l,
                            out.data.data() + (static_cast<std::size_t>(s) * ch + c) * oh * ow);
    }
  }
  return out;
}

// Mean over H x W with unchanged quantization parameters:
// q = Z + round_half_away(sum (q - Z) / (H * W)).
inline QuantizedTensor qglobal_avg_pool(const QuantizedTensor& input) {
  if (input.shape.rank() != 4) throw DimensionError("qglobal_avg_pool expects rank 4");
  const int n = input.shape[0], c = input.shape[1];
  const std::int64_t hw = static_cast<std::int64_t>(input.shape[2]) * input.shape[3];
  const int z = input.qp.zero_point;
  QuantizedTensor out(Shape{n, c}, input.qp);
  for (int i = 0; i < n * c; ++i) {
    std::int64_t sum = 0;
    const std::uint8_t* p = input.data.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) sum += static_cast<std::int64_t>(p[j]) - z;
    const std::int64_t r = sum >= 0 ? (2 * sum + hw) / (2 * hw) : -((-2 * sum + hw) / (2 * hw));
    out.data[i] = static_cast<std::uint8_t>(std::clamp<std::int64_t>(z + r, kQuantMin, kQuantMax));
  }
  return out;
}

inline QuantizedTensor qdense(const QuantizedTensor& input, const QuantizedLayer& l) {
  if (input.shape.rank() != 2 || input.shape[1] != l.in_channels) {
    throw DimensionError("QDense: input " + input.shape.ToString() + " does not have " +
                         std::to_string(l.in_channels) + " features");
  }
  const int n = input.shape[0], in = l.in_channels, outc = l.out_channels;
  const int zin = input.qp.zero_point, zw = l.weight_qp.zero_point;
  QuantizedTensor out(Shape{n, outc}, l.output_qp);
  std::vector<std::int32_t> acc(outc);
  for (int s = 0; s < n; ++s) {
    std::copy(l.bias.begin(), l.bias.end(), acc.begin());
    for (int i = 0; i < in; ++i) {
      const std::int32_t a = static_cast<std::int32_t>(input.data[s * in + i]) - zin;
      if (a == 0) continue;
      const std::uint8_t* wrow = l.weight.data() + static_cast<std::size_t>(i) * outc;
      for (int j = 0; j < outc; ++j) acc[j] += a * (static_cast<std::int32_t>(wrow[j]) - zw);
    }
    detail::RequantizeRow(acc.data(), outc, l, out.data.data() + static_cast<std::size_t>(s) * outc);
  }
  return out;
}

inline QuantizedTensor run_quantized_layer(const QuantizedTensor& x, const QuantizedLayer& l) {
  switch (l.kind) {
    case QLayerKind::kConv:
    case QLayerKind::kPointwiseConv: return qconv2d(x, l);
    case QLayerKind::kDepthwiseConv: return qdepthwise_conv2d(x, l);
    case QLayerKind::kGlobalAvgPool: return qglobal_avg_pool(x);
    case QLayerKind::kDense: return qdense(x, l);
  }
  throw IntegrityError("unknown quantized layer kind");
}

}  // namespace qdk

#endif  // QDK_INT8_KERNELS_HPP_

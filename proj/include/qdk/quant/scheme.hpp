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

// Asymmetric uint8 affine quantization: r = S * (q - Z).

#ifndef QDK_QUANT_SCHEME_HPP_
#define QDK_QUANT_SCHEME_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

inline constexpr int kQuantMin = 0;
inline constexpr int kQuantMax = 255;

struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

// Round half away from zero; the single rounding mode used everywhere.
inline double round_half_away(double x) { return std::round(x); }

inline QuantParams compute_qparams(double min, double max) {
  if (std::isnan(min) || std::isnan(max)) {
    throw NumericError("compute_qparams: NaN range");
  }
  if (min > max) {
    throw ContractError("compute_qparams: min " + std::to_string(min) +
                        " > max " + std::to_string(max));
  }
  const double lo = std::min(min, 0.0);
  const double hi = std::max(max, 0.0);
  if (lo == 0.0 && hi == 0.0) return {1.0, 0};
  const double scale = (hi - lo) / static_cast<double>(kQuantMax - kQuantMin);
  const double z = round_half_away(static_cast<double>(kQuantMin) - lo / scale);
  const int zero_point =
      static_cast<int>(std::clamp(z, double{kQuantMin}, double{kQuantMax}));
  return {scale, zero_point};
}

// Unclamped integer code; used to detect saturation.
inline long long quantize_unclamped(double r, const QuantParams& qp) {
  const double v = round_half_away(r / qp.scale) + qp.zero_point;
  constexpr double kBig = 1e15;
  return static_cast<long long>(std::clamp(v, -kBig, kBig));
}

inline int quantize(double r, const QuantParams& qp) {
  const long long q = quantize_unclamped(r, qp);
  return static_cast<int>(std::clamp<long long>(q, kQuantMin, kQuantMax));
}

inline double dequantize(int q, const QuantParams& qp) {
  return qp.scale * static_cast<double>(q - qp.zero_point);
}

// Running min/max of an observed tensor. The range always contains zero.
struct ObserverState {
  double running_min = 0.0;
  double running_max = 0.0;
  bool frozen = false;
  std::int64_t sample_count = 0;

  QuantParams qparams() const { return compute_qparams(running_min, running_max); }

  friend bool operator==(const ObserverState&, const ObserverState&) = default;
};

inline ObserverState observer_update(ObserverState state,
                                     std::span<const float> values) {
  if (state.frozen) return state;
  double lo = state.running_min, hi = state.running_max;
  for (float v : values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  state.running_min = std::min(lo, 0.0);
  state.running_max = std::max(hi, 0.0);
  ++state.sample_count;
  return state;
}

inline ObserverState observer_update(const ObserverState& state, const Tensor& t) {
  return observer_update(state, t.data());
}

inline QuantParams qparams_from_values(std::span<const float> values) {
  double lo = 0.0, hi = 0.0;
  for (float v : values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  return compute_qparams(lo, hi);
}

// Quantize-dequantize. If `ste_mask` is given it receives 1 for elements
// that were inside the representable range and 0 for saturated ones, which
// is the clipped straight-through gradient of the op.
inline Tensor fake_quantize(const Tensor& t, const QuantParams& qp,
                            std::vector<std::uint8_t>* ste_mask = nullptr) {
  Tensor out(t.shape());
  if (ste_mask) ste_mask->resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const long long raw = quantize_unclamped(t[i], qp);
    const long long q = std::clamp<long long>(raw, kQuantMin, kQuantMax);
    out[i] = static_cast<float>(dequantize(static_cast<int>(q), qp));
    if (ste_mask) (*ste_mask)[i] = (raw == q) ? 1 : 0;
  }
  return out;
}

inline Tensor fake_quantize_backward(const Tensor& grad,
                                     const std::vector<std::uint8_t>& ste_mask) {
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    out[i] = ste_mask[i] ? grad[i] : 0.0f;
  return out;
}

// M = m0_fixed * 2^-31 * 2^-shift with m0_fixed in [2^30, 2^31).
struct RequantMultiplier {
  std::int32_t m0_fixed = 1 << 30;
  int shift = 0;

  double value() const {
    return std::ldexp(static_cast<double>(m0_fixed), -31 - shift);
  }

  friend bool operator==(const RequantMultiplier&, const RequantMultiplier&) = default;
};

inline RequantMultiplier derive_requant_multiplier(double s1, double s2, double s3) {
  if (!(s1 > 0.0) || !(s2 > 0.0) || !(s3 > 0.0) || !std::isfinite(s1) ||
      !std::isfinite(s2) || !std::isfinite(s3)) {
    throw ContractError("requant multiplier needs finite positive scales");
  }
  const double m = s1 * s2 / s3;
  if (m >= 1.0) {
    throw ContractError("real multiplier " + std::to_string(m) +
                        " >= 1; recompute the output scale from a wider range");
  }
  int exponent = 0;
  const double mantissa = std::frexp(m, &exponent);  // m = mantissa * 2^exponent
  int shift = -exponent;
  long long fixed = static_cast<long long>(round_half_away(std::ldexp(mantissa, 31)));
  if (fixed == (1LL << 31)) {
    fixed /= 2;
    --shift;
  }
  if (shift < 0) {
    throw ContractError("real multiplier rounds to 1; recompute the output scale");
  }
  return {static_cast<std::int32_t>(fixed), shift};
}

}  // namespace qdk

#endif  // QDK_QUANT_SCHEME_HPP_

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

#ifndef QDK_NN_LOSS_HPP_
#define QDK_NN_LOSS_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

inline constexpr double kProbFloor = 1e-12;

// Row-wise softmax of logits / temperature, max-subtracted.
template <std::floating_point Real>
std::vector<Real> softmax_rows(std::span<const Real> logits, int cols, Real temperature) {
  if (!(temperature > 0)) throw ContractError("softmax temperature must be > 0");
  std::vector<Real> out(logits.size());
  const std::size_t rows = logits.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* z = logits.data() + r * cols;
    Real* p = out.data() + r * cols;
    Real mx = z[0];
    for (int j = 0; j < cols; ++j) {
      if (!std::isfinite(z[j])) throw NumericError("non-finite logit");
      mx = std::max(mx, z[j]);
    }
    Real sum = 0;
    for (int j = 0; j < cols; ++j) {
      p[j] = std::exp((z[j] - mx) / temperature);
      sum += p[j];
    }
    for (int j = 0; j < cols; ++j) p[j] /= sum;
  }
  return out;
}

inline Tensor softmax(const Tensor& logits, float temperature = 1.0f) {
  if (logits.rank() != 2) throw DimensionError("softmax expects [N x C] logits");
  std::vector<double> z(logits.data().begin(), logits.data().end());
  std::vector<double> p = softmax_rows<double>(z, logits.dim(1), temperature);
  return Tensor(logits.shape(), std::vector<float>(p.begin(), p.end()));
}

// Mean over rows of -sum_j target[j] * log(max(probs[j], 1e-12)).
template <std::floating_point Real>
Real cross_entropy_rows(std::span<const Real> target, std::span<const Real> probs,
                        int cols, bool check_rows = true) {
  if (target.size() != probs.size() || cols <= 0 || probs.size() % cols != 0) {
    throw DimensionError("cross_entropy: argument shapes differ");
  }
  const std::size_t rows = probs.size() / cols;
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    Real st = 0, sp = 0, row = 0;
    for (int j = 0; j < cols; ++j) {
      const Real t = target[r * cols + j], p = probs[r * cols + j];
      if (std::isnan(t) || std::isnan(p)) throw NumericError("cross_entropy: NaN input");
      st += t;
      sp += p;
      row -= t * std::log(std::max<Real>(p, static_cast<Real>(kProbFloor)));
    }
    if (check_rows && (std::abs(st - 1) > 1e-5 || std::abs(sp - 1) > 1e-5)) {
      throw ContractError("cross_entropy: rows must sum to 1");
    }
    total += row;
  }
  return total / static_cast<Real>(rows);
}

inline double cross_entropy(const Tensor& target, const Tensor& probs) {
  if (!(target.shape() == probs.shape()) || target.rank() != 2) {
    throw DimensionError("cross_entropy shape mismatch: " + target.shape().ToString() +
                         " vs " + probs.shape().ToString());
  }
  std::vector<double> t(target.data().begin(), target.data().end());
  std::vector<double> p(probs.data().begin(), probs.data().end());
  return cross_entropy_rows<double>(t, p, target.dim(1));
}

inline Tensor one_hot(std::span<const int> labels, int num_classes) {
  Tensor t(Shape{static_cast<int>(labels.size()), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " out of range");
    }
    t[i * num_classes + labels[i]] = 1.0f;
  }
  return t;
}

}  // namespace qdk

#endif  // QDK_NN_LOSS_HPP_

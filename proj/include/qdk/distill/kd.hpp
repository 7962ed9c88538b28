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

// Knowledge-distillation loss
//   L = alpha * CE(y, softmax(z_s)) + beta * T^2 * CE(softmax(z_t / T), softmax(z_s / T))
// and its gradient w.r.t. the student logits. The teacher logits are
// constants. With `literal_hard_term` the hard term also uses z_s / T.

#ifndef QDK_DISTILL_KD_HPP_
#define QDK_DISTILL_KD_HPP_

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/nn/loss.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

class KDConfig {
 public:
  KDConfig() = default;

  // alpha is always 1 - beta.
  KDConfig(double beta, double temperature, bool literal_hard_term = false)
      : alpha_(1.0 - beta), beta_(beta), temperature_(temperature),
        literal_hard_term_(literal_hard_term) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double temperature() const { return temperature_; }
  bool literal_hard_term() const { return literal_hard_term_; }
  double hard_temperature() const { return literal_hard_term_ ? temperature_ : 1.0; }

 private:
  double alpha_ = 1.0;
  double beta_ = 0.0;
  double temperature_ = 1.0;
  bool literal_hard_term_ = false;
};

template <std::floating_point Real>
std::vector<Real> soft_labels(std::span<const Real> logits, int classes, Real temperature) {
  return softmax_rows<Real>(logits, classes, temperature);
}

inline Tensor soft_labels(const Tensor& logits, float temperature) {
  if (!(temperature > 0.0f)) throw ContractError("temperature must be > 0");
  return softmax(logits, temperature);
}

namespace detail {

template <std::floating_point Real>
void CheckKdArgs(std::span<const Real> teacher, std::span<const Real> student,
                 std::span<const int> labels, int classes) {
  if (classes <= 0 || teacher.size() != student.size() || student.size() % classes != 0 ||
      student.size() / classes != labels.size()) {
    throw ShapeError("kd_loss: teacher has " + std::to_string(teacher.size()) +
                     " logits, student " + std::to_string(student.size()) + ", " +
                     std::to_string(labels.size()) + " labels over " +
                     std::to_string(classes) + " classes");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ContractError("label out of range: " + std::to_string(y));
  }
}

template <std::floating_point Real>
std::vector<Real> OneHot(std::span<const int> labels, int classes) {
  std::vector<Real> t(labels.size() * classes, Real{0});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i * classes + labels[i]] = Real{1};
  return t;
}

}  // namespace detail

template <std::floating_point Real>
Real kd_loss(std::span<const Real> teacher, std::span<const Real> student,
             std::span<const int> labels, int classes, const KDConfig& cfg) {
  detail::CheckKdArgs(teacher, student, labels, classes);
  const Real t = static_cast<Real>(cfg.temperature());
  Real loss = 0;
  if (cfg.alpha() != 0.0) {
    const std::vector<Real> p = softmax_rows<Real>(student, classes,
                                                   static_cast<Real>(cfg.hard_temperature()));
    const std::vector<Real> y = detail::OneHot<Real>(labels, classes);
    loss += static_cast<Real>(cfg.alpha()) * cross_entropy_rows<Real>(y, p, classes, false);
  }
  if (cfg.beta() != 0.0) {
    const std::vector<Real> pt = soft_labels<Real>(teacher, classes, t);
    const std::vector<Real> ps = soft_labels<Real>(student, classes, t);
    loss += static_cast<Real>(cfg.beta()) * t * t * cross_entropy_rows<Real>(pt, ps, classes, false);
  }
  return loss;
}

// Per row: alpha * (p_s - y) / T_hard + beta * T * (p_s^T - p_t^T), over N.
template <std::floating_point Real>
std::vector<Real> kd_loss_grad(std::span<const Real> teacher, std::span<const Real> student,
                               std::span<const int> labels, int classes, const KDConfig& cfg) {
  detail::CheckKdArgs(teacher, student, labels, classes);
  const std::size_t n = labels.size();
  const Real t = static_cast<Real>(cfg.temperature());
  const Real inv_n = Real{1} / static_cast<Real>(n);
  std::vector<Real> grad(student.size(), Real{0});
  if (cfg.alpha() != 0.0) {
    const Real th = static_cast<Real>(cfg.hard_temperature());
    const std::vector<Real> p = softmax_rows<Real>(student, classes, th);
    const Real k = static_cast<Real>(cfg.alpha()) / th * inv_n;
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < classes; ++j) {
        const std::size_t idx = i * classes + j;
        grad[idx] += k * (p[idx] - (labels[i] == j ? Real{1} : Real{0}));
      }
  }
  if (cfg.beta() != 0.0) {
    const std::vector<Real> pt = soft_labels<Real>(teacher, classes, t);
    const std::vector<Real> ps = soft_labels<Real>(student, classes, t);
    const Real k = static_cast<Real>(cfg.beta()) * t * inv_n;
    for (std::size_t idx = 0; idx < grad.size(); ++idx) grad[idx] += k * (ps[idx] - pt[idx]);
  }
  return grad;
}

namespace detail {

inline void CheckLogitTensors(const Tensor& teacher, const Tensor& student) {
  if (teacher.rank() != 2 || student.rank() != 2 || !(teacher.shape() == student.shape())) {
    throw ShapeError("teacher logits " + teacher.shape().ToString() +
                     " and student logits " + student.shape().ToString() + " differ");
  }
}

}  // namespace detail

inline double kd_loss(const Tensor& teacher, const Tensor& student, std::span<const int> labels,
                      const KDConfig& cfg) {
  detail::CheckLogitTensors(teacher, student);
  std::vector<double> t(teacher.data().begin(), teacher.data().end());
  std::vector<double> s(student.data().begin(), student.data().end());
  return kd_loss<double>(t, s, labels, student.dim(1), cfg);
}

inline Tensor kd_loss_grad(const Tensor& teacher, const Tensor& student,
                           std::span<const int> labels, const KDConfig& cfg) {
  detail::CheckLogitTensors(teacher, student);
  std::vector<double> t(teacher.data().begin(), teacher.data().end());
  std::vector<double> s(student.data().begin(), student.data().end());
  const std::vector<double> g = kd_loss_grad<double>(t, s, labels, student.dim(1), cfg);
  return Tensor(student.shape(), std::vector<float>(g.begin(), g.end()));
}

}  // namespace qdk

#endif  // QDK_DISTILL_KD_HPP_

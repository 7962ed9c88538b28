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

#ifndef QDK_NN_OPTIM_HPP_
#define QDK_NN_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/nn/forward.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

struct TrainConfig {
  int epochs = 60;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> milestones = {21, 30, 45};
  double lr_gamma = 0.2;
  float dropout_p = 0.2f;
  int freeze_epoch = 45;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void Validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ConfigError("lr_gamma must be in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ConfigError("dropout_p must be in [0, 1)");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i] <= milestones[i - 1]) {
        throw ConfigError("milestones must be strictly increasing");
      }
    }
  }

  // Same schedule shape compressed (or stretched) to `new_epochs`.
  TrainConfig Rescaled(int new_epochs) const {
    TrainConfig c = *this;
    const double f = static_cast<double>(new_epochs) / epochs;
    c.epochs = new_epochs;
    c.milestones.clear();
    for (int m : milestones) {
      const int scaled = static_cast<int>(std::lround(m * f));
      if (c.milestones.empty() || scaled > c.milestones.back()) c.milestones.push_back(scaled);
    }
    c.freeze_epoch = static_cast<int>(std::lround(freeze_epoch * f));
    return c;
  }
};

// base_lr * gamma^(number of milestones <= epoch)
inline double multistep_lr(double base_lr, int epoch, std::span<const int> milestones,
                           double gamma) {
  double lr = base_lr;
  for (int m : milestones)
    if (m <= epoch) lr *= gamma;
  return lr;
}

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v
inline void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                     double momentum, double weight_decay) {
  if (!(param.shape() == grad.shape()) || !(param.shape() == velocity.shape())) {
    throw DimensionError("sgd_step: parameter " + param.shape().ToString() +
                         ", gradient " + grad.shape().ToString() + ", velocity " +
                         velocity.shape().ToString());
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double d = static_cast<double>(grad[i]) + weight_decay * param[i];
    const double v = momentum * velocity[i] + d;
    velocity[i] = static_cast<float>(v);
    param[i] = static_cast<float>(param[i] - lr * v);
  }
}

// Momentum buffers for every parameter of one model.
class SgdOptimizer {
 public:
  SgdOptimizer(const Model& model, double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {
    for_each_parameter(model, [&](const Tensor& t) { velocity_.emplace_back(t.shape()); });
  }

  void Step(Model& model, const Gradients& grads, double lr) {
    if (grads.size() != velocity_.size()) {
      throw StructureError("gradient count does not match parameter count");
    }
    std::size_t i = 0;
    for_each_parameter(model, [&](Tensor& p) {
      sgd_step(p, grads[i], velocity_[i], lr, momentum_, weight_decay_);
      ++i;
    });
  }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

}  // namespace qdk

#endif  // QDK_NN_OPTIM_HPP_

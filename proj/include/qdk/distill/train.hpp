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

// Training loops: float training (optionally distilled from a teacher),
// quantized distillation (QAT student under a float teacher), and the
// post-training quantization baseline.

#ifndef QDK_DISTILL_TRAIN_HPP_
#define QDK_DISTILL_TRAIN_HPP_

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "qdk/data/augment.hpp"
#include "qdk/data/dataset.hpp"
#include "qdk/data/sampler.hpp"
#include "qdk/distill/kd.hpp"
#include "qdk/error.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/metrics.hpp"
#include "qdk/nn/forward.hpp"
#include "qdk/nn/optim.hpp"
#include "qdk/quant/convert.hpp"
#include "qdk/quant/fuse.hpp"

namespace qdk {

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mpca = 0.0;
  bool frozen = false;

  std::string ToLine() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch=%d lr=%.6g train_loss=%.6f val_mpca=%.6f frozen=%d",
                  epoch, lr, train_loss, val_mpca, frozen ? 1 : 0);
    return buf;
  }
};

using EpochLogger = std::function<void(const EpochRecord&)>;

namespace detail {

inline void CheckTeacher(const Model* teacher, const Model& student, const KDConfig& kd) {
  if (!teacher) {
    if (kd.beta() != 0.0) throw ConfigError("distillation with beta > 0 needs a teacher");
    return;
  }
  if (teacher->meta.num_classes != student.meta.num_classes) {
    throw ConfigError("teacher predicts " + std::to_string(teacher->meta.num_classes) +
                      " classes, student " + std::to_string(student.meta.num_classes));
  }
}

inline std::vector<int> PredictSimulated(const Model& model, const QuantSim& sim,
                                         const DatasetSplit& split) {
  return PredictSplit(split, 64, [&](const Tensor& x) {
    return forward(model, x, Mode::kEval, nullptr, &sim).logits;
  });
}

// One optimisation pass over the training split. The teacher, when
// present, sees exactly the augmented batch the student sees.
inline double RunEpoch(Model& student, const Model* teacher, const DatasetSplit& train,
                       const KDConfig& kd, SgdOptimizer& opt, double lr, int batch_size,
                       ImbalancedSampler& sampler, Rng& rng, QuantSim* sim) {
  const int steps = (train.size() + batch_size - 1) / batch_size;
  double total = 0.0;
  for (int step = 0; step < steps; ++step) {
    const std::vector<int> idx = sampler.Batch(batch_size, rng);
    const Tensor x = make_batch(train, idx, &rng);
    const std::vector<int> y = gather_labels(train, idx);
    ForwardResult fr = forward(student, x, Mode::kTrain, &rng, sim);
    const Tensor t = (teacher && kd.beta() != 0.0) ? forward(*teacher, x, Mode::kEval).logits
                                                   : fr.logits;
    total += kd_loss(t, fr.logits, y, kd);
    const Gradients g = backward(student, fr.cache, kd_loss_grad(t, fr.logits, y, kd));
    opt.Step(student, g, lr);
    commit_batch_statistics(student, fr.cache);
    if (sim) sim->observers = fr.cache.observers;
  }
  return total / steps;
}

}  // namespace detail

// Float training. With a teacher the loss is the distillation loss; without
// one (or with beta = 0) it is plain cross-entropy.
inline Model train_float(Model student, const Dataset& data, const TrainConfig& cfg,
                         const Model* teacher = nullptr, const KDConfig& kd = KDConfig(),
                         const EpochLogger& log = {}) {
  cfg.Validate();
  detail::CheckTeacher(teacher, student, kd);
  Rng rng(cfg.seed);
  ImbalancedSampler sampler(data.train.labels, data.train.num_classes());
  SgdOptimizer opt(student, cfg.momentum, cfg.weight_decay);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = multistep_lr(cfg.lr, epoch, cfg.milestones, cfg.lr_gamma);
    rec.train_loss = detail::RunEpoch(student, teacher, data.train, kd, opt, rec.lr,
                                      cfg.batch_size, sampler, rng, nullptr);
    if (log) {
      rec.val_mpca = mean_per_class_accuracy(predict(student, data.val), data.val.labels,
                                             student.meta.num_classes);
      log(rec);
    }
  }
  return student;
}

struct QatResult {
  Model folded;        // float model with BN folded, aligned with `observers`
  QuantSim sim;
  QuantizedModel quantized;
};

// Quantized distillation: the student trains as a fake-quantized fused
// graph against the float teacher; batch norm and observers freeze at
// cfg.freeze_epoch; the result is converted to the integer model.
inline QatResult quantized_distillation_train_full(const Model* teacher, const Model& student,
                                                   const Dataset& data, const KDConfig& kd,
                                                   const TrainConfig& cfg,
                                                   const EpochLogger& log = {}) {
  cfg.Validate();
  detail::CheckTeacher(teacher, student, kd);
  Model qat = prepare_qat(student);
  QuantSim sim = QuantSim::For(qat);
  Rng rng(cfg.seed);
  ImbalancedSampler sampler(data.train.labels, data.train.num_classes());
  SgdOptimizer opt(qat, cfg.momentum, cfg.weight_decay);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == cfg.freeze_epoch) {
      qat.bn_frozen = true;
      sim.Freeze();
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.frozen = qat.bn_frozen;
    rec.lr = multistep_lr(cfg.lr, epoch, cfg.milestones, cfg.lr_gamma);
    rec.train_loss = detail::RunEpoch(qat, teacher, data.train, kd, opt, rec.lr, cfg.batch_size,
                                      sampler, rng, &sim);
    if (log) {
      rec.val_mpca = mean_per_class_accuracy(detail::PredictSimulated(qat, sim, data.val),
                                             data.val.labels, qat.meta.num_classes);
      log(rec);
    }
  }
  QatResult r;
  r.folded = fold_qat(qat);
  r.sim = std::move(sim);
  r.quantized = convert_to_int8(r.folded, r.sim);
  return r;
}

inline QuantizedModel quantized_distillation_train(const Model& teacher, const Model& student,
                                                   const Dataset& data, const KDConfig& kd,
                                                   const TrainConfig& cfg,
                                                   const EpochLogger& log = {}) {
  return quantized_distillation_train_full(&teacher, student, data, kd, cfg, log).quantized;
}

// Post-training quantization: fold BN with the final statistics, watch the
// activations of `calib` (centre crops), convert.
inline QuantizedModel post_training_quantize(const Model& model, const DatasetSplit& calib,
                                             int batch_size = 64) {
  Model fused = fuse_layers(model);
  Model observed = fused;
  for (Layer& l : observed.layers)
    if (l.spec.kind == LayerKind::kDropout) l.spec.dropout_p = 0.0f;
  QuantSim sim = QuantSim::For(observed);
  std::vector<int> idx;
  for (int begin = 0; begin < calib.size(); begin += batch_size) {
    const int end = std::min(calib.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    ForwardResult fr = forward(observed, make_batch(calib, idx, nullptr), Mode::kTrain,
                               nullptr, &sim);
    sim.observers = std::move(fr.cache.observers);
  }
  return convert_to_int8(fused, sim);
}

}  // namespace qdk

#endif  // QDK_DISTILL_TRAIN_HPP_

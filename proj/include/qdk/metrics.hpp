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

#ifndef QDK_METRICS_HPP_
#define QDK_METRICS_HPP_

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qdk/data/augment.hpp"
#include "qdk/data/dataset.hpp"
#include "qdk/error.hpp"
#include "qdk/int8/engine.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/nn/forward.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

// Mean over classes present in `labels` of per-class recall.
inline double mean_per_class_accuracy(std::span<const int> preds, std::span<const int> labels,
                                      int num_classes) {
  if (labels.empty()) throw ContractError("mean_per_class_accuracy: empty input");
  if (preds.size() != labels.size()) {
    throw ShapeError("mean_per_class_accuracy: " + std::to_string(preds.size()) +
                     " predictions for " + std::to_string(labels.size()) + " labels");
  }
  std::vector<int> total(num_classes, 0), correct(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ContractError("label out of range: " + std::to_string(labels[i]));
    }
    ++total[labels[i]];
    if (preds[i] == labels[i]) ++correct[labels[i]];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(correct[c]) / total[c];
    ++present;
  }
  return sum / present;
}

struct EvalReport {
  int num_classes = 0;
  int samples = 0;
  double mean_per_class_accuracy = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;   // -1 for classes absent from the split
  std::vector<std::vector<int>> confusion;  // [true][predicted]
};

inline EvalReport evaluate_predictions(std::span<const int> preds, std::span<const int> labels,
                                       int num_classes) {
  EvalReport r;
  r.num_classes = num_classes;
  r.samples = static_cast<int>(labels.size());
  r.mean_per_class_accuracy = mean_per_class_accuracy(preds, labels, num_classes);
  r.confusion.assign(num_classes, std::vector<int>(num_classes, 0));
  int hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes) {
      throw ContractError("prediction out of range: " + std::to_string(preds[i]));
    }
    ++r.confusion[labels[i]][preds[i]];
    hits += preds[i] == labels[i];
  }
  r.accuracy = static_cast<double>(hits) / labels.size();
  for (int c = 0; c < num_classes; ++c) {
    const int tot = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), 0);
    r.per_class_accuracy.push_back(tot ? static_cast<double>(r.confusion[c][c]) / tot : -1.0);
  }
  return r;
}

inline std::vector<int> argmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    const float* row = logits.ptr() + static_cast<std::size_t>(i) * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

namespace detail {

template <typename RunBatch>
std::vector<int> PredictSplit(const DatasetSplit& split, int batch_size, RunBatch&& run) {
  std::vector<int> preds;
  preds.reserve(split.size());
  std::vector<int> idx;
  for (int begin = 0; begin < split.size(); begin += batch_size) {
    const int end = std::min(split.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const std::vector<int> p = argmax_rows(run(make_batch(split, idx, nullptr)));
    preds.insert(preds.end(), p.begin(), p.end());
  }
  return preds;
}

inline void CheckClasses(int model_classes, const DatasetSplit& split) {
  if (model_classes < split.num_classes()) {
    throw ConfigError("model predicts " + std::to_string(model_classes) +
                      " classes but the split has " + std::to_string(split.num_classes()));
  }
}

}  // namespace detail

// Eval-mode predictions on centre crops.
inline std::vector<int> predict(const Model& model, const DatasetSplit& split, int batch_size = 64) {
  detail::CheckClasses(model.meta.num_classes, split);
  return detail::PredictSplit(split, batch_size, [&](const Tensor& x) {
    return forward(model, x, Mode::kEval).logits;
  });
}

inline std::vector<int> predict(const QuantizedModel& qm, const DatasetSplit& split,
                                int batch_size = 64) {
  detail::CheckClasses(qm.meta.num_classes, split);
  return detail::PredictSplit(split, batch_size,
                              [&](const Tensor& x) { return quantized_forward(qm, x); });
}

template <typename M>
EvalReport evaluate(const M& model, const DatasetSplit& split) {
  const int classes = model.meta.num_classes;
  return evaluate_predictions(predict(model, split), split.labels, classes);
}

}  // namespace qdk

#endif  // QDK_METRICS_HPP_

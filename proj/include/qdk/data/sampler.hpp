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

// Class-balancing sampler: index i is drawn with probability proportional
// to 1 / count(class(i)), so every class is equally likely per draw.

#ifndef QDK_DATA_SAMPLER_HPP_
#define QDK_DATA_SAMPLER_HPP_

#include <random>
#include <span>
#include <string>
#include <vector>

#include "qdk/error.hpp"

namespace qdk {

class ImbalancedSampler {
 public:
  ImbalancedSampler(std::span<const int> labels, int num_classes) : by_class_(num_classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int y = labels[i];
      if (y < 0 || y >= num_classes) throw ContractError("label out of range: " + std::to_string(y));
      by_class_[y].push_back(static_cast<int>(i));
    }
    std::vector<double> w(num_classes, 0.0);
    for (int c = 0; c < num_classes; ++c) w[c] = by_class_[c].empty() ? 0.0 : 1.0;
    if (labels.empty()) throw ConfigError("sampler needs at least one sample");
    classes_ = std::discrete_distribution<int>(w.begin(), w.end());
  }

  int Next(std::mt19937_64& rng) {
    const std::vector<int>& pool = by_class_[classes_(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
  }

  std::vector<int> Batch(int batch_size, std::mt19937_64& rng) {
    std::vector<int> out(batch_size);
    for (int& i : out) i = Next(rng);
    return out;
  }

 private:
  std::vector<std::vector<int>> by_class_;
  std::discrete_distribution<int> classes_;
};

// Sample indices are laid out class by class following `class_counts`.
inline std::vector<int> imbalanced_sampler(std::span<const int> class_counts, int batch_size,
                                           std::mt19937_64& rng) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] < 1) throw ConfigError("every class count must be >= 1");
    labels.insert(labels.end(), class_counts[c], static_cast<int>(c));
  }
  ImbalancedSampler s(labels, static_cast<int>(class_counts.size()));
  return s.Batch(batch_size, rng);
}

}  // namespace qdk

#endif  // QDK_DATA_SAMPLER_HPP_

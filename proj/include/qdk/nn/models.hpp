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

// The two model families: a plain Conv-BN-ReLU teacher and a width-scalable
// depthwise-separable student. Both take 1x32x32 inputs.
//
//   student:  Conv4x4/s2 -> [DW3x3 -> PW1x1] x3 -> GAP -> Dropout -> Dense
//   teacher:  Conv4x4/s2 -> Conv3x3/s2 -> Conv3x3/s2 -> Conv3x3/s2 -> GAP
//             -> Dropout -> Dense
// Stride-2 3x3 layers run unpadded on odd extents (32 -> 15 -> 7 -> 3 -> 1)
// so every output size is integral.

#ifndef QDK_NN_MODELS_HPP_
#define QDK_NN_MODELS_HPP_

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>

#include "qdk/error.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

inline constexpr int kStudentStem = 16;
inline constexpr int kStudentBlocks[3] = {32, 64, 128};
inline constexpr int kTeacherChannels[4] = {32, 64, 128, 128};

namespace detail {

inline Tensor HeNormal(Shape shape, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

class Builder {
 public:
  Builder(Model& model, std::uint64_t seed) : model_(model), rng_(seed) {}

  void Conv(LayerKind kind, int in, int out, int kernel, int stride, int padding) {
    Layer l;
    l.spec.kind = kind;
    l.spec.in_channels = in;
    l.spec.out_channels = out;
    l.spec.kernel = kernel;
    l.spec.stride = stride;
    l.spec.padding = padding;
    const int fan_in = (kind == LayerKind::kDepthwiseConv ? 1 : in) * kernel * kernel;
    l.weight = HeNormal(expected_weight_shape(l.spec), fan_in, rng_);
    l.bias = Tensor(Shape{out});
    model_.layers.push_back(std::move(l));
    BatchNormRelu(out);
  }

  void Head(int features, int classes, float dropout_p) {
    Layer pool;
    pool.spec.kind = LayerKind::kGlobalAvgPool;
    model_.layers.push_back(std::move(pool));
    Layer drop;
    drop.spec.kind = LayerKind::kDropout;
    drop.spec.dropout_p = dropout_p;
    model_.layers.push_back(std::move(drop));
    Layer dense;
    dense.spec.kind = LayerKind::kDense;
    dense.spec.in_channels = features;
    dense.spec.out_channels = classes;
    std::normal_distribution<float> dist(0.0f, std::sqrt(1.0f / static_cast<float>(features)));
    dense.weight = Tensor(Shape{features, classes});
    for (float& v : dense.weight.data()) v = dist(rng_);
    dense.bias = Tensor(Shape{classes});
    model_.layers.push_back(std::move(dense));
  }

 private:
  void BatchNormRelu(int channels) {
    Layer bn;
    bn.spec.kind = LayerKind::kBatchNorm;
    bn.spec.in_channels = bn.spec.out_channels = channels;
    bn.bn = BatchNormState::Identity(channels);
    model_.layers.push_back(std::move(bn));
    Layer relu;
    relu.spec.kind = LayerKind::kReLU;
    model_.layers.push_back(std::move(relu));
  }

  Model& model_;
  std::mt19937_64 rng_;
};

}  // namespace detail

inline int scaled_channels(int base, double width_multiplier) {
  const int c = static_cast<int>(std::lround(base * width_multiplier));
  if (c < 1) {
    std::cerr << "warning: width multiplier " << width_multiplier << " gives 0 channels for base "
              << base << "; clamped to 1\n";
    return 1;
  }
  return c;
}

inline Model build_teacher(int num_classes, std::uint64_t seed = 0, float dropout_p = 0.5f) {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  Model m;
  m.meta.family = Family::kTeacher;
  m.meta.num_classes = num_classes;
  detail::Builder b(m, seed);
  b.Conv(LayerKind::kConv, 1, kTeacherChannels[0], 4, 2, 0);
  b.Conv(LayerKind::kConv, kTeacherChannels[0], kTeacherChannels[1], 3, 2, 0);
  b.Conv(LayerKind::kConv, kTeacherChannels[1], kTeacherChannels[2], 3, 2, 0);
  b.Conv(LayerKind::kConv, kTeacherChannels[2], kTeacherChannels[3], 3, 2, 0);
  b.Head(kTeacherChannels[3], num_classes, dropout_p);
  infer_shapes(m);
  return m;
}

inline Model build_student(int num_classes, double width_multiplier, std::uint64_t seed = 0,
                           float dropout_p = 0.2f) {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(width_multiplier > 0.0)) throw ConfigError("width_multiplier must be > 0");
  Model m;
  m.meta.family = Family::kStudent;
  m.meta.width_multiplier = width_multiplier;
  m.meta.num_classes = num_classes;
  detail::Builder b(m, seed);
  int c = scaled_channels(kStudentStem, width_multiplier);
  b.Conv(LayerKind::kConv, 1, c, 4, 2, 0);
  for (int i = 0; i < 3; ++i) {
    const int out = scaled_channels(kStudentBlocks[i], width_multiplier);
    const bool down = i > 0;
    b.Conv(LayerKind::kDepthwiseConv, c, c, 3, down ? 2 : 1, down ? 0 : 1);
    b.Conv(LayerKind::kPointwiseConv, c, out, 1, 1, 0);
    c = out;
  }
  b.Head(c, num_classes, dropout_p);
  infer_shapes(m);
  return m;
}

}  // namespace qdk

#endif  // QDK_NN_MODELS_HPP_

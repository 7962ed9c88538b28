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

// Conv-BN(-ReLU) fusion, in two flavours:
//  * fuse_layers(): inference folding with final running statistics.
//  * prepare_qat(): groups the same triples into FusedConv layers that keep
//    a live batch norm, so training can continue while weights are
//    fake-quantized in their folded form. fold_qat() finishes the job.

#ifndef QDK_QUANT_FUSE_HPP_
#define QDK_QUANT_FUSE_HPP_

#include <cmath>
#include <utility>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

struct FoldedConv {
  Tensor weight;
  Tensor bias;
};

// w'[o] = w[o] * g[o] / sqrt(var[o] + eps); b'[o] = beta[o] + (b[o] - mean[o]) * same
inline FoldedConv fold_batchnorm(const Tensor& weight, const Tensor& bias,
                                 const BatchNormState& bn) {
  const int co = weight.dim(0);
  if (bn.channels() != co) {
    throw DimensionError("batch norm has " + std::to_string(bn.channels()) +
                         " channels, convolution has " + std::to_string(co));
  }
  if (!(bn.eps > 0.0f)) throw InvariantError("batch norm epsilon must be > 0");
  FoldedConv out{Tensor(weight.shape()), Tensor(Shape{co})};
  const std::size_t per = weight.size() / co;
  for (int o = 0; o < co; ++o) {
    if (bn.running_var[o] < 0.0f) {
      throw InvariantError("negative running variance in channel " + std::to_string(o));
    }
    const double s = static_cast<double>(bn.gamma[o]) /
                     std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
    for (std::size_t k = 0; k < per; ++k)
      out.weight[o * per + k] = static_cast<float>(weight[o * per + k] * s);
    const double b = bias.empty() ? 0.0 : bias[o];
    out.bias[o] = static_cast<float>(bn.beta[o] + (b - bn.running_mean[o]) * s);
  }
  return out;
}

namespace detail {

template <typename OnTriple>
Model GroupConvBn(const Model& model, OnTriple&& on_triple) {
  Model out;
  out.meta = model.meta;
  out.bn_frozen = model.bn_frozen;
  const auto& layers = model.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.spec.kind == LayerKind::kBatchNorm) {
      throw StructureError(layer_name(i, l.spec) + ": batch norm not preceded by a convolution");
    }
    if (is_conv(l.spec.kind) && i + 1 < layers.size() &&
        layers[i + 1].spec.kind == LayerKind::kBatchNorm) {
      const bool relu = i + 2 < layers.size() && layers[i + 2].spec.kind == LayerKind::kReLU;
      out.layers.push_back(on_triple(l, *layers[i + 1].bn, relu));
      i += relu ? 2 : 1;
      continue;
    }
    out.layers.push_back(l);
  }
  return out;
}

inline Layer MakeFused(const Layer& conv, bool relu) {
  Layer f;
  f.spec = conv.spec;
  f.spec.kind = LayerKind::kFusedConv;
  f.spec.conv_kind = conv.spec.kind;
  f.spec.relu = relu;
  return f;
}

}  // namespace detail

// Folds every Conv-BN(-ReLU) into a FusedConv. Expects final running stats.
inline Model fuse_layers(const Model& model) {
  return detail::GroupConvBn(model, [](const Layer& conv, const BatchNormState& bn, bool relu) {
    Layer f = detail::MakeFused(conv, relu);
    FoldedConv folded = fold_batchnorm(conv.weight, conv.bias, bn);
    f.weight = std::move(folded.weight);
    f.bias = std::move(folded.bias);
    return f;
  });
}

// QAT graph: every convolution becomes a FusedConv (absorbing a following
// BN and ReLU); the BN statistics stay trainable inside the layer.
inline Model prepare_qat(const Model& model) {
  Model grouped = detail::GroupConvBn(model, [](const Layer& conv, const BatchNormState& bn,
                                                bool relu) {
    Layer f = detail::MakeFused(conv, relu);
    f.weight = conv.weight;
    f.bias = conv.bias;
    f.bn = bn;
    return f;
  });
  Model out;
  out.meta = grouped.meta;
  out.bn_frozen = grouped.bn_frozen;
  for (std::size_t i = 0; i < grouped.layers.size(); ++i) {
    const Layer& l = grouped.layers[i];
    if (is_conv(l.spec.kind)) {
      const bool relu = i + 1 < grouped.layers.size() &&
                        grouped.layers[i + 1].spec.kind == LayerKind::kReLU;
      Layer f = detail::MakeFused(l, relu);
      f.weight = l.weight;
      f.bias = l.bias;
      out.layers.push_back(std::move(f));
      if (relu) ++i;
      continue;
    }
    out.layers.push_back(l);
  }
  infer_shapes(out);
  return out;
}

// Folds the live batch norm of every FusedConv into its weights. Layer
// indices are preserved, so observers attached to the QAT graph still line up.
inline Model fold_qat(const Model& model) {
  Model out = model;
  for (Layer& l : out.layers) {
    if (l.spec.kind != LayerKind::kFusedConv || !l.bn) continue;
    FoldedConv folded = fold_batchnorm(l.weight, l.bias, *l.bn);
    l.weight = std::move(folded.weight);
    l.bias = std::move(folded.bias);
    l.bn.reset();
  }
  out.bn_frozen = false;
  return out;
}

}  // namespace qdk

#endif  // QDK_QUANT_FUSE_HPP_

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

#ifndef QDK_QUANT_CONVERT_HPP_
#define QDK_QUANT_CONVERT_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/nn/forward.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/quant/scheme.hpp"

namespace qdk {

namespace detail {

inline QLayerKind ToQuantizedKind(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return QLayerKind::kConv;
    case LayerKind::kDepthwiseConv: return QLayerKind::kDepthwiseConv;
    case LayerKind::kPointwiseConv: return QLayerKind::kPointwiseConv;
    case LayerKind::kDense: return QLayerKind::kDense;
    default: break;
  }
  throw StructureError(std::string("layer kind ") + to_string(k) + " has no integer kernel");
}

inline std::int32_t QuantizeBias(double b, double scale) {
  const double q = round_half_away(b / scale);
  constexpr double lo = std::numeric_limits<std::int32_t>::min();
  constexpr double hi = std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int32_t>(std::clamp(q, lo, hi));
}

}  // namespace detail

// Builds the integer model from a fused float model and the observers that
// watched it (observers[0]: input, observers[i + 1]: output of layer i).
inline QuantizedModel convert_to_int8(const Model& fused, std::span<const ObserverState> observers) {
  if (observers.size() != fused.layers.size() + 1) {
    throw ConversionError("expected " + std::to_string(fused.layers.size() + 1) +
                          " observers, got " + std::to_string(observers.size()));
  }
  infer_shapes(fused);
  if (observers[0].sample_count < 1) throw ConversionError("model input was never observed");

  QuantizedModel qm;
  qm.meta = fused.meta;
  qm.input_qp = observers[0].qparams();
  QuantParams current = qm.input_qp;

  const auto& layers = fused.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const LayerSpec& s = l.spec;
    switch (s.kind) {
      case LayerKind::kBatchNorm:
        throw StructureError(layer_name(i, s) + ": unfused batch norm; fuse the model first");
      case LayerKind::kFusedConv:
        if (l.bn) throw StructureError(layer_name(i, s) + ": batch norm not folded");
        [[fallthrough]];
      case LayerKind::kConv:
      case LayerKind::kDepthwiseConv:
      case LayerKind::kPointwiseConv:
      case LayerKind::kDense: {
        std::size_t out_slot = i + 1;
        bool relu = s.kind == LayerKind::kFusedConv && s.relu;
        if (s.kind != LayerKind::kFusedConv && s.kind != LayerKind::kDense &&
            i + 1 < layers.size() && layers[i + 1].spec.kind == LayerKind::kReLU) {
          relu = true;
          ++i;
          out_slot = i + 1;
          if (observers[out_slot].sample_count < 1) out_slot = i;  // relu commutes with fq
        }
        const ObserverState& obs = observers[out_slot];
        if (obs.sample_count < 1) {
          throw ConversionError(layer_name(out_slot - 1, layers[out_slot - 1].spec) +
                                " was never observed");
        }
        QuantizedLayer q;
        q.kind = detail::ToQuantizedKind(s.effective_conv());
        q.in_channels = s.in_channels;
        q.out_channels = s.out_channels;
        q.kernel = s.kernel;
        q.stride = s.stride;
        q.padding = s.padding;
        q.relu = relu;
        q.weight_shape = l.weight.shape();
        q.input_qp = current;
        q.weight_qp = qparams_from_values(l.weight.data());
        q.output_qp = obs.qparams();
        if (std::all_of(l.weight.data().begin(), l.weight.data().end(),
                        [](float v) { return v == 0.0f; })) {
          // Every weight is Z_w whatever the scale; pick one that keeps M = 1/2.
          q.weight_qp = {0.5 * q.output_qp.scale / current.scale, 0};
        }
        q.weight.resize(l.weight.size());
        for (std::size_t k = 0; k < l.weight.size(); ++k)
          q.weight[k] = static_cast<std::uint8_t>(quantize(l.weight[k], q.weight_qp));
        const double bias_scale = q.input_qp.scale * q.weight_qp.scale;
        q.bias.resize(s.out_channels);
        for (int o = 0; o < s.out_channels; ++o)
          q.bias[o] = detail::QuantizeBias(l.bias[o], bias_scale);
        q.multiplier = derive_requant_multiplier(q.input_qp.scale, q.weight_qp.scale,
                                                 q.output_qp.scale);
        current = q.output_qp;
        qm.layers.push_back(std::move(q));
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        QuantizedLayer q;
        q.kind = QLayerKind::kGlobalAvgPool;
        q.input_qp = q.output_qp = q.weight_qp = current;
        qm.layers.push_back(std::move(q));
        break;
      }
      case LayerKind::kReLU:
        throw StructureError(layer_name(i, s) + ": activation not attached to a convolution");
      case LayerKind::kDropout:
        break;
    }
  }
  validate(qm);
  return qm;
}

inline QuantizedModel convert_to_int8(const Model& fused, const QuantSim& sim) {
  return convert_to_int8(fused, std::span<const ObserverState>(sim.observers));
}

}  // namespace qdk

#endif  // QDK_QUANT_CONVERT_HPP_

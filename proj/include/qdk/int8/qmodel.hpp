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

#ifndef QDK_INT8_QMODEL_HPP_
#define QDK_INT8_QMODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/quant/scheme.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

struct QuantizedTensor {
  Shape shape;
  std::vector<std::uint8_t> data;
  QuantParams qp;

  QuantizedTensor() = default;
  QuantizedTensor(Shape s, QuantParams q)
      : shape(s), data(s.numel(), static_cast<std::uint8_t>(q.zero_point)), qp(q) {}
  QuantizedTensor(Shape s, std::vector<std::uint8_t> d, QuantParams q)
      : shape(s), data(std::move(d)), qp(q) {
    if (data.size() != shape.numel()) {
      throw ShapeError("quantized tensor of shape " + shape.ToString() + " needs " +
                       std::to_string(shape.numel()) + " values");
    }
  }

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

inline QuantizedTensor quantize_tensor(const Tensor& t, const QuantParams& qp) {
  QuantizedTensor q(t.shape(), qp);
  for (std::size_t i = 0; i < t.size(); ++i)
    q.data[i] = static_cast<std::uint8_t>(quantize(t[i], qp));
  return q;
}

inline Tensor dequantize_tensor(const QuantizedTensor& q) {
  Tensor t(q.shape);
  for (std::size_t i = 0; i < q.data.size(); ++i)
    t[i] = static_cast<float>(dequantize(q.data[i], q.qp));
  return t;
}

enum class QLayerKind : std::uint8_t {
  kConv = 0,
  kDepthwiseConv = 1,
  kPointwiseConv = 2,
  kGlobalAvgPool = 3,
  kDense = 4,
};

inline const char* to_string(QLayerKind kind) {
  switch (kind) {
    case QLayerKind::kConv: return "QConv";
    case QLayerKind::kDepthwiseConv: return "QDepthwiseConv";
    case QLayerKind::kPointwiseConv: return "QPointwiseConv";
    case QLayerKind::kGlobalAvgPool: return "QGlobalAvgPool";
    case QLayerKind::kDense: return "QDense";
  }
  return "?";
}

inline bool has_weights(QLayerKind kind) { return kind != QLayerKind::kGlobalAvgPool; }

struct QuantizedLayer {
  QLayerKind kind = QLayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool relu = false;
  Shape weight_shape;                 // conv: [O, I, K, K]; dense: [in, out]
  std::vector<std::uint8_t> weight;
  std::vector<std::int32_t> bias;     // scale S_in * S_w, zero-point 0
  QuantParams input_qp;
  QuantParams weight_qp;
  QuantParams output_qp;
  RequantMultiplier multiplier;

  friend bool operator==(const QuantizedLayer&, const QuantizedLayer&) = default;
};

struct QuantizedModel {
  ModelMeta meta;
  QuantParams input_qp;
  std::vector<QuantizedLayer> layers;

  const QuantParams& output_qp() const {
    return layers.empty() ? input_qp : layers.back().output_qp;
  }

  std::size_t weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size();
    return n;
  }
  std::size_t bias_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.bias.size();
    return n;
  }
};

// Checks the quantization chain and shapes. Throws IntegrityError.
inline void validate(const QuantizedModel& qm) {
  auto fail = [](std::size_t i, const QuantizedLayer& l, const std::string& what) {
    throw IntegrityError("layer " + std::to_string(i) + " (" + to_string(l.kind) + "): " + what);
  };
  QuantParams prev = qm.input_qp;
  int channels = qm.meta.in_channels, h = qm.meta.in_h, w = qm.meta.in_w;
  bool flat = false;
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    const QuantizedLayer& l = qm.layers[i];
    if (!(l.input_qp == prev)) fail(i, l, "input quantization does not match previous output");
    for (const QuantParams* qp : {&l.input_qp, &l.output_qp, &l.weight_qp}) {
      if (!(qp->scale > 0.0) || qp->zero_point < kQuantMin || qp->zero_point > kQuantMax) {
        fail(i, l, "invalid quantization parameters");
      }
    }
    if (l.kind == QLayerKind::kGlobalAvgPool) {
      if (flat) fail(i, l, "pooling after flattening");
      if (!(l.output_qp == l.input_qp)) fail(i, l, "pooling must keep quantization parameters");
      flat = true;
      h = w = 1;
    } else {
      if (l.in_channels != channels) {
        fail(i, l, "expects " + std::to_string(l.in_channels) + " channels, got " +
                       std::to_string(channels));
      }
      if (l.weight.size() != l.weight_shape.numel() ||
          l.bias.size() != static_cast<std::size_t>(l.out_channels)) {
        fail(i, l, "parameter sizes do not match shapes");
      }
      if (l.multiplier.m0_fixed < (1 << 30) || l.multiplier.shift < 0) {
        fail(i, l, "requantization multiplier out of range");
      }
      if (l.kind == QLayerKind::kDense) {
        if (!flat) fail(i, l, "dense layer needs pooled input");
        if (!(l.weight_shape == Shape{l.in_channels, l.out_channels})) fail(i, l, "bad weight shape");
      } else {
        if (flat) fail(i, l, "convolution after flattening");
        const int per_group = l.kind == QLayerKind::kDepthwiseConv ? 1 : l.in_channels;
        if (!(l.weight_shape == Shape{l.out_channels, per_group, l.kernel, l.kernel})) {
          fail(i, l, "bad weight shape");
        }
        if (l.kind == QLayerKind::kDepthwiseConv && l.out_channels != l.in_channels) {
          fail(i, l, "depthwise layer must keep channel count");
        }
        ConvGeometry g{l.in_channels, l.out_channels, h, w, l.kernel, l.kernel, l.stride, l.padding};
        try {
          g.Check();
        } catch (const ShapeError& e) {
          fail(i, l, e.what());
        }
        h = g.out_h();
        w = g.out_w();
      }
      channels = l.out_channels;
    }
    prev = l.output_qp;
  }
  if (!flat || channels != qm.meta.num_classes) {
    throw IntegrityError("quantized model does not end in " +
                         std::to_string(qm.meta.num_classes) + " logits");
  }
}

}  // namespace qdk

#endif  // QDK_INT8_QMODEL_HPP_

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

#ifndef QDK_NN_LAYER_HPP_
#define QDK_NN_LAYER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

enum class LayerKind : std::uint8_t {
  kConv = 0,
  kDepthwiseConv = 1,
  kPointwiseConv = 2,
  kBatchNorm = 3,
  kReLU = 4,
  kGlobalAvgPool = 5,
  kDense = 6,
  kDropout = 7,
  // Conv-BN(-ReLU) collapsed into one op. During QAT the BN statistics stay
  // live inside the layer; after folding `bn` is empty.
  kFusedConv = 8,
};

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "Conv";
    case LayerKind::kDepthwiseConv: return "DepthwiseConv";
    case LayerKind::kPointwiseConv: return "PointwiseConv";
    case LayerKind::kBatchNorm: return "BatchNorm";
    case LayerKind::kReLU: return "ReLU";
    case LayerKind::kGlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::kDense: return "Dense";
    case LayerKind::kDropout: return "Dropout";
    case LayerKind::kFusedConv: return "FusedConv";
  }
  return "?";
}

inline bool is_conv(LayerKind kind) {
  return kind == LayerKind::kConv || kind == LayerKind::kDepthwiseConv ||
         kind == LayerKind::kPointwiseConv;
}

struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  int in_channels = 0;   // features for Dense
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  float dropout_p = 0.0f;
  // FusedConv only.
  LayerKind conv_kind = LayerKind::kConv;
  bool relu = false;

  // The convolution actually performed (FusedConv delegates to conv_kind).
  LayerKind effective_conv() const {
    return kind == LayerKind::kFusedConv ? conv_kind : kind;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

  static BatchNormState Identity(int channels) {
    BatchNormState bn;
    bn.gamma = Tensor::Filled(Shape{channels}, 1.0f);
    bn.beta = Tensor(Shape{channels});
    bn.running_mean = Tensor(Shape{channels});
    bn.running_var = Tensor::Filled(Shape{channels}, 1.0f);
    return bn;
  }

  int channels() const { return gamma.empty() ? 0 : gamma.dim(0); }
};

struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;
  std::optional<BatchNormState> bn;
};

enum class Family : std::uint8_t { kTeacher = 0, kStudent = 1 };

inline const char* to_string(Family f) {
  return f == Family::kTeacher ? "teacher" : "student";
}

struct ModelMeta {
  Family family = Family::kStudent;
  double width_multiplier = 1.0;
  int num_classes = 0;
  int in_channels = 1;
  int in_h = 32;
  int in_w = 32;
};

struct Model {
  ModelMeta meta;
  std::vector<Layer> layers;
  // Once set, BatchNorm uses running statistics in train mode as well and
  // stops updating them.
  bool bn_frozen = false;
};

// Shape of one sample as it flows through the network.
struct ActShape {
  int c = 0, h = 0, w = 0;
  bool flat = false;  // after GlobalAvgPool / Dense
};

inline Shape expected_weight_shape(const LayerSpec& s) {
  switch (s.effective_conv()) {
    case LayerKind::kConv: return Shape{s.out_channels, s.in_channels, s.kernel, s.kernel};
    case LayerKind::kDepthwiseConv: return Shape{s.out_channels, 1, s.kernel, s.kernel};
    case LayerKind::kPointwiseConv: return Shape{s.out_channels, s.in_channels, 1, 1};
    default: break;
  }
  return Shape{s.in_channels, s.out_channels};  // Dense: [in, out]
}

inline std::string layer_name(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + to_string(spec.kind) + ")";
}

// Propagates the input shape through the model, validating channel
// consistency and parameter shapes. Returns the output shape of every layer.
inline std::vector<ActShape> infer_shapes(const Model& model) {
  std::vector<ActShape> shapes;
  ActShape cur{model.meta.in_channels, model.meta.in_h, model.meta.in_w, false};
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    const LayerSpec& s = layer.spec;
    auto fail = [&](const std::string& what) {
      throw StructureError(layer_name(i, s) + ": " + what);
    };
    switch (s.kind) {
      case LayerKind::kConv:
      case LayerKind::kDepthwiseConv:
      case LayerKind::kPointwiseConv:
      case LayerKind::kFusedConv: {
        if (cur.flat) fail("convolution after flattening");
        if (s.in_channels != cur.c) {
          fail("expects " + std::to_string(s.in_channels) + " channels, got " +
               std::to_string(cur.c));
        }
        const LayerKind ck = s.effective_conv();
        if (!is_conv(ck)) fail("fused layer wraps a non-convolution");
        if (ck == LayerKind::kDepthwiseConv && s.out_channels != s.in_channels) {
          fail("depthwise convolution must keep the channel count");
        }
        if (ck == LayerKind::kPointwiseConv &&
            (s.kernel != 1 || s.stride != 1 || s.padding != 0)) {
          fail("pointwise convolution must be 1x1, stride 1, no padding");
        }
        ConvGeometry g{s.in_channels, s.out_channels, cur.h, cur.w,
                       s.kernel, s.kernel, s.stride, s.padding};
        try {
          g.Check();
        } catch (const ShapeError& e) {
          fail(e.what());
        }
        if (!(layer.weight.shape() == expected_weight_shape(s))) {
          fail("weight shape " + layer.weight.shape().ToString() + ", expected " +
               expected_weight_shape(s).ToString());
        }
        if (layer.bias.empty() || layer.bias.dim(0) != s.out_channels) {
          fail("bias must have " + std::to_string(s.out_channels) + " entries");
        }
        if (layer.bn && layer.bn->channels() != s.out_channels) {
          fail("embedded batch norm channel mismatch");
        }
        cur = {s.out_channels, g.out_h(), g.out_w(), false};
        break;
      }
      case LayerKind::kBatchNorm:
        if (!layer.bn || layer.bn->channels() != cur.c) {
          fail("batch norm channels do not match " + std::to_string(cur.c));
        }
        break;
      case LayerKind::kReLU:
      case LayerKind::kDropout:
        break;
      case LayerKind::kGlobalAvgPool:
        if (cur.flat) fail("pooling after flattening");
        cur = {cur.c, 1, 1, true};
        break;
      case LayerKind::kDense:
        if (!cur.flat) fail("dense layer needs pooled input");
        if (s.in_channels != cur.c) {
          fail("expects " + std::to_string(s.in_channels) + " features, got " +
               std::to_string(cur.c));
        }
        if (!(layer.weight.shape() == expected_weight_shape(s)) ||
            layer.bias.empty() || layer.bias.dim(0) != s.out_channels) {
          fail("parameter shapes do not match spec");
        }
        cur = {s.out_channels, 1, 1, true};
        break;
    }
    shapes.push_back(cur);
  }
  if (shapes.empty() || !shapes.back().flat ||
      shapes.back().c != model.meta.num_classes) {
    throw StructureError("model output does not produce " +
                         std::to_string(model.meta.num_classes) + " class logits");
  }
  return shapes;
}

// Visits every learnable tensor in a fixed order: per layer weight, bias,
// then batch-norm gamma and beta. Gradients use the same order.
template <typename ModelT, typename Fn>
void for_each_parameter(ModelT& model, Fn&& fn) {
  for (auto& layer : model.layers) {
    if (!layer.weight.empty()) fn(layer.weight);
    if (!layer.bias.empty()) fn(layer.bias);
    if (layer.bn) {
      fn(layer.bn->gamma);
      fn(layer.bn->beta);
    }
  }
}

inline std::size_t parameter_count(const Model& model) {
  std::size_t n = 0;
  for_each_parameter(model, [&](const Tensor& t) { n += t.size(); });
  return n;
}

}  // namespace qdk

#endif  // QDK_NN_LAYER_HPP_

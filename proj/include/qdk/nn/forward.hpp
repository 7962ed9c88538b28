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

// Forward and analytic backward passes over a layer graph, with optional
// simulated 8-bit quantization (observers + fake quantization + STE).

#ifndef QDK_NN_FORWARD_HPP_
#define QDK_NN_FORWARD_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/quant/scheme.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

// Fake-quantization attachment for QAT. observers[0] watches the model
// input, observers[i + 1] the output of layer i.
struct QuantSim {
  std::vector<ObserverState> observers;
  bool fake_quant = true;

  static QuantSim For(const Model& model) {
    QuantSim sim;
    sim.observers.resize(model.layers.size() + 1);
    return sim;
  }

  void Freeze() {
    for (auto& o : observers) o.frozen = true;
  }
};

// Layers whose weights are quantized and whose outputs carry their own
// observer in a quantized graph.
inline bool is_quantizable(LayerKind kind) {
  return kind == LayerKind::kFusedConv || kind == LayerKind::kDense || is_conv(kind);
}

struct LayerCache {
  Tensor input;
  Tensor output;
  Tensor pre_quant;               // activation before output fake quantization
  Tensor conv_out;                // FusedConv with BN: conv(x, wq) before 1/s
  Tensor x_hat;                   // normalized BN input
  std::vector<float> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // unbiased, for running statistics
  bool batch_stats = false;
  Tensor wq;                      // weights actually used in the forward pass
  std::vector<double> fold_scale; // gamma / sqrt(running_var + eps)
  std::vector<std::uint8_t> weight_mask;
  std::vector<std::uint8_t> act_mask;
  std::vector<std::uint8_t> dropout_mask;
};

struct Cache {
  Mode mode = Mode::kEval;
  bool simulated = false;
  std::vector<LayerCache> layers;
  std::vector<ObserverState> observers;  // post-update observer states
};

struct ForwardResult {
  Tensor logits;
  Cache cache;
};

using Gradients = std::vector<Tensor>;

namespace detail {

inline std::size_t spatial_size(const Tensor& x) {
  return x.rank() == 4 ? static_cast<std::size_t>(x.dim(2)) * x.dim(3) : 1;
}

struct BnOut {
  Tensor y;
  Tensor x_hat;
  std::vector<float> inv_std;
  std::vector<double> mean;
  std::vector<double> var_unbiased;
};

inline BnOut BatchNormForward(const Tensor& x, const BatchNormState& bn,
                              bool batch_stats) {
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = spatial_size(x);
  const double count = static_cast<double>(n) * hw;
  BnOut out;
  out.y = Tensor(x.shape());
  out.x_hat = Tensor(x.shape());
  out.inv_std.resize(c);
  if (batch_stats) {
    out.mean.assign(c, 0.0);
    out.var_unbiased.assign(c, 0.0);
  }
  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (batch_stats) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
      }
      mean = s / count;
      double ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) {
          const double d = p[j] - mean;
          ss += d * d;
        }
      }
      var = ss / count;
      out.mean[ch] = mean;
      out.var_unbiased[ch] = count > 1 ? ss / (count - 1) : var;
    } else {
      mean = bn.running_mean[ch];
      var = bn.running_var[ch];
    }
    const double inv = 1.0 / std::sqrt(var + bn.eps);
    out.inv_std[ch] = static_cast<float>(inv);
    const double g = bn.gamma[ch], b = bn.beta[ch];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        const double xh = (x[off + j] - mean) * inv;
        out.x_hat[off + j] = static_cast<float>(xh);
        out.y[off + j] = static_cast<float>(g * xh + b);
      }
    }
  }
  return out;
}

inline Tensor BatchNormBackward(const Tensor& dy, const Tensor& x_hat,
                                const std::vector<float>& inv_std,
                                const Tensor& gamma, bool batch_stats,
                                Tensor& dgamma, Tensor& dbeta) {
  const int n = dy.dim(0), c = dy.dim(1);
  const std::size_t hw = spatial_size(dy);
  const double count = static_cast<double>(n) * hw;
  Tensor dx(dy.shape());
  dgamma = Tensor(Shape{c});
  dbeta = Tensor(Shape{c});
  for (int ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        sum_dy += dy[off + j];
        sum_dy_xh += static_cast<double>(dy[off + j]) * x_hat[off + j];
      }
    }
    dgamma[ch] = static_cast<float>(sum_dy_xh);
    dbeta[ch] = static_cast<float>(sum_dy);
    const double k = static_cast<double>(gamma[ch]) * inv_std[ch];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        const double v = batch_stats
            ? k * (dy[off + j] - sum_dy / count - x_hat[off + j] * sum_dy_xh / count)
            : k * dy[off + j];
        dx[off + j] = static_cast<float>(v);
      }
    }
  }
  return dx;
}

inline Tensor ConvForward(LayerKind kind, const Tensor& x, const Tensor& w,
                          const Tensor& b, const LayerSpec& s) {
  if (kind == LayerKind::kDepthwiseConv) return depthwise_conv2d(x, w, b, s.stride, s.padding);
  return conv2d(x, w, b, s.stride, s.padding);
}

inline ConvGrads ConvBackward(LayerKind kind, const Tensor& x, const Tensor& w,
                              const Tensor& dy, const LayerSpec& s, bool need_input) {
  if (kind == LayerKind::kDepthwiseConv) {
    return depthwise_conv2d_backward(x, w, dy, s.stride, s.padding, need_input);
  }
  return conv2d_backward(x, w, dy, s.stride, s.padding, need_input);
}

inline Tensor DenseForward(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  const int n = y.dim(0), m = y.dim(1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(i) * m + j] += b[j];
  return y;
}

inline void ApplyRelu(Tensor& t) {
  for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

inline Tensor MaskRelu(const Tensor& grad, const Tensor& output) {
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    out[i] = output[i] > 0.0f ? grad[i] : 0.0f;
  return out;
}

inline Tensor ScaleChannels(const Tensor& w, const std::vector<double>& s) {
  Tensor out(w.shape());
  const std::size_t per = w.size() / s.size();
  for (std::size_t o = 0; o < s.size(); ++o)
    for (std::size_t k = 0; k < per; ++k)
      out[o * per + k] = static_cast<float>(w[o * per + k] * s[o]);
  return out;
}

}  // namespace detail

// Runs the network. In train mode, dropout draws from `rng`, batch norm uses
// batch statistics (unless the model has frozen BN) and, when `sim` is set,
// observers see the activations. Parameters and observers are not modified;
// see commit_batch_statistics().
inline ForwardResult forward(const Model& model, const Tensor& batch, Mode mode,
                             Rng* rng = nullptr, const QuantSim* sim = nullptr) {
  const ModelMeta& m = model.meta;
  if (batch.rank() != 4 || batch.dim(1) != m.in_channels || batch.dim(2) != m.in_h ||
      batch.dim(3) != m.in_w) {
    throw DimensionError("input batch " + batch.shape().ToString() +
                         " does not match model input [N x " +
                         std::to_string(m.in_channels) + "x" + std::to_string(m.in_h) +
                         "x" + std::to_string(m.in_w) + "]");
  }
  const bool train = mode == Mode::kTrain;
  const bool fq = sim != nullptr && sim->fake_quant;
  if (sim && sim->observers.size() != model.layers.size() + 1) {
    throw StructureError("quantization observers do not match the model");
  }

  ForwardResult result;
  Cache& cache = result.cache;
  cache.mode = mode;
  cache.simulated = fq;
  cache.layers.resize(model.layers.size());
  if (sim) cache.observers = sim->observers;

  auto observe = [&](std::size_t slot, const Tensor& t) -> QuantParams {
    if (train) cache.observers[slot] = observer_update(cache.observers[slot], t);
    return cache.observers[slot].qparams();
  };

  Tensor x = batch;
  QuantParams act_qp;
  if (fq) {
    act_qp = observe(0, x);
    x = fake_quantize(x, act_qp);
  }

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    const LayerSpec& s = layer.spec;
    LayerCache& lc = cache.layers[li];
    lc.input = x;
    try {
      switch (s.kind) {
        case LayerKind::kConv:
        case LayerKind::kDepthwiseConv:
        case LayerKind::kPointwiseConv:
        case LayerKind::kFusedConv: {
          const LayerKind ck = s.effective_conv();
          const bool with_bn = s.kind == LayerKind::kFusedConv && layer.bn.has_value();
          Tensor w = layer.weight;
          if (with_bn) {
            const BatchNormState& bn = *layer.bn;
            lc.fold_scale.resize(s.out_channels);
            for (int o = 0; o < s.out_channels; ++o) {
              lc.fold_scale[o] = static_cast<double>(bn.gamma[o]) /
                                 std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
            }
            w = detail::ScaleChannels(w, lc.fold_scale);
          }
          if (fq) w = fake_quantize(w, qparams_from_values(w.data()), &lc.weight_mask);
          lc.wq = w;
          Tensor y;
          if (with_bn) {
            const BatchNormState& bn = *layer.bn;
            lc.conv_out = detail::ConvForward(ck, x, w, Tensor(), s);
            Tensor c(lc.conv_out.shape());
            const std::size_t hw = detail::spatial_size(c);
            for (int n = 0; n < c.dim(0); ++n)
              for (int o = 0; o < s.out_channels; ++o) {
                const std::size_t off = (static_cast<std::size_t>(n) * s.out_channels + o) * hw;
                for (std::size_t j = 0; j < hw; ++j)
                  c[off + j] = static_cast<float>(lc.conv_out[off + j] / lc.fold_scale[o] +
                                                  layer.bias[o]);
              }
            lc.batch_stats = train && !model.bn_frozen;
            detail::BnOut bo = detail::BatchNormForward(c, bn, lc.batch_stats);
            y = std::move(bo.y);
            lc.x_hat = std::move(bo.x_hat);
            lc.inv_std = std::move(bo.inv_std);
            lc.batch_mean = std::move(bo.mean);
            lc.batch_var = std::move(bo.var_unbiased);
          } else {
            y = detail::ConvForward(ck, x, w, layer.bias, s);
          }
          if (s.kind == LayerKind::kFusedConv && s.relu) detail::ApplyRelu(y);
          if (fq) {
            act_qp = observe(li + 1, y);
            lc.pre_quant = y;
            y = fake_quantize(y, act_qp, &lc.act_mask);
          }
          x = std::move(y);
          break;
        }
        case LayerKind::kBatchNorm: {
          if (fq) throw StructureError("unfused batch norm in a quantized graph");
          lc.batch_stats = train && !model.bn_frozen;
          detail::BnOut bo = detail::BatchNormForward(x, *layer.bn, lc.batch_stats);
          x = std::move(bo.y);
          lc.x_hat = std::move(bo.x_hat);
          lc.inv_std = std::move(bo.inv_std);
          lc.batch_mean = std::move(bo.mean);
          lc.batch_var = std::move(bo.var_unbiased);
          break;
        }
        case LayerKind::kReLU:
          detail::ApplyRelu(x);
          break;
        case LayerKind::kGlobalAvgPool:
          x = global_avg_pool(x);
          if (fq) x = fake_quantize(x, act_qp, &lc.act_mask);
          break;
        case LayerKind::kDense: {
          if (x.rank() != 2) {
            throw DimensionError("dense input must be [N x features], got " +
                                 x.shape().ToString());
          }
          Tensor w = layer.weight;
          if (fq) w = fake_quantize(w, qparams_from_values(w.data()), &lc.weight_mask);
          lc.wq = w;
          x = detail::DenseForward(x, w, layer.bias);
          if (fq) {
            act_qp = observe(li + 1, x);
            x = fake_quantize(x, act_qp, &lc.act_mask);
          }
          break;
        }
        case LayerKind::kDropout:
          if (train && s.dropout_p > 0.0f) {
            if (!rng) throw ContractError("train-mode dropout needs an RNG");
            std::uniform_real_distribution<float> u(0.0f, 1.0f);
            const float keep = 1.0f - s.dropout_p;
            const float inv = 1.0f / keep;
            lc.dropout_mask.resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
              const bool k = u(*rng) < keep;
              lc.dropout_mask[i] = k;
              x[i] = k ? x[i] * inv : 0.0f;
            }
          }
          break;
      }
    } catch (const DimensionError& e) {
      throw DimensionError(layer_name(li, s) + ": " + e.what());
    } catch (const ShapeError& e) {
      throw ShapeError(layer_name(li, s) + ": " + e.what());
    }
    lc.output = x;
  }
  result.logits = std::move(x);
  return result;
}

// Gradients of the loss w.r.t. every parameter (for_each_parameter order),
// given dL/d(logits). Fake-quantized tensors use the clipped STE.
inline Gradients backward(const Model& model, const Cache& cache,
                          const Tensor& loss_grad) {
  if (cache.layers.size() != model.layers.size()) {
    throw StructureError("cache does not belong to this model");
  }
  struct Slot { Tensor weight, bias, gamma, beta; };
  std::vector<Slot> slots(model.layers.size());
  Tensor g = loss_grad;

  for (std::size_t r = model.layers.size(); r-- > 0;) {
    const Layer& layer = model.layers[r];
    const LayerSpec& s = layer.spec;
    const LayerCache& lc = cache.layers[r];
    const bool need_input = r > 0;
    Slot& slot = slots[r];
    switch (s.kind) {
      case LayerKind::kConv:
      case LayerKind::kDepthwiseConv:
      case LayerKind::kPointwiseConv:
      case LayerKind::kFusedConv: {
        const LayerKind ck = s.effective_conv();
        if (!lc.act_mask.empty()) g = fake_quantize_backward(g, lc.act_mask);
        if (s.kind == LayerKind::kFusedConv && s.relu) {
          g = detail::MaskRelu(g, lc.pre_quant.empty() ? lc.output : lc.pre_quant);
        }
        const bool with_bn = s.kind == LayerKind::kFusedConv && layer.bn.has_value();
        if (with_bn) {
          const BatchNormState& bn = *layer.bn;
          Tensor dgamma, dbeta;
          Tensor dc = detail::BatchNormBackward(g, lc.x_hat, lc.inv_std, bn.gamma,
                                                lc.batch_stats, dgamma, dbeta);
          const int co = s.out_channels;
          const std::size_t hw = detail::spatial_size(dc);
          Tensor dconv(dc.shape());
          std::vector<double> dbias(co, 0.0), ds(co, 0.0);
          for (int n = 0; n < dc.dim(0); ++n)
            for (int o = 0; o < co; ++o) {
              const std::size_t off = (static_cast<std::size_t>(n) * co + o) * hw;
              const double sc = lc.fold_scale[o];
              for (std::size_t j = 0; j < hw; ++j) {
                const double d = dc[off + j];
                dbias[o] += d;
                dconv[off + j] = static_cast<float>(d / sc);
                ds[o] -= d * lc.conv_out[off + j] / (sc * sc);
              }
            }
          ConvGrads cg = detail::ConvBackward(ck, lc.input, lc.wq, dconv, s, need_input);
          Tensor dws = lc.weight_mask.empty() ? std::move(cg.weight)
                                              : fake_quantize_backward(cg.weight, lc.weight_mask);
          const std::size_t per = dws.size() / co;
          slot.weight = Tensor(layer.weight.shape());
          for (int o = 0; o < co; ++o) {
            const double sc = lc.fold_scale[o];
            for (std::size_t k = 0; k < per; ++k) {
              const std::size_t i = o * per + k;
              slot.weight[i] = static_cast<float>(dws[i] * sc);
              ds[o] += static_cast<double>(dws[i]) * layer.weight[i];
            }
          }
          slot.bias = Tensor(Shape{co});
          slot.gamma = std::move(dgamma);
          for (int o = 0; o < co; ++o) {
            slot.bias[o] = static_cast<float>(dbias[o]);
            const double inv_sigma =
                1.0 / std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
            slot.gamma[o] = static_cast<float>(slot.gamma[o] + ds[o] * inv_sigma);
          }
          slot.beta = std::move(dbeta);
          g = std::move(cg.input);
        } else {
          ConvGrads cg = detail::ConvBackward(ck, lc.input, lc.wq.empty() ? layer.weight : lc.wq,
                                              g, s, need_input);
          slot.weight = lc.weight_mask.empty() ? std::move(cg.weight)
                                               : fake_quantize_backward(cg.weight, lc.weight_mask);
          slot.bias = std::move(cg.bias);
          g = std::move(cg.input);
        }
        break;
      }
      case LayerKind::kBatchNorm: {
        g = detail::BatchNormBackward(g, lc.x_hat, lc.inv_std, layer.bn->gamma,
                                      lc.batch_stats, slot.gamma, slot.beta);
        break;
      }
      case LayerKind::kReLU:
        g = detail::MaskRelu(g, lc.output);
        break;
      case LayerKind::kGlobalAvgPool:
        if (!lc.act_mask.empty()) g = fake_quantize_backward(g, lc.act_mask);
        g = global_avg_pool_backward(lc.input.shape(), g);
        break;
      case LayerKind::kDense: {
        if (!lc.act_mask.empty()) g = fake_quantize_backward(g, lc.act_mask);
        const Tensor& w = lc.wq.empty() ? layer.weight : lc.wq;
        const int n = g.dim(0), in = s.in_channels, out = s.out_channels;
        std::vector<float> xt(static_cast<std::size_t>(in) * n);
        detail::Transpose(n, in, lc.input.ptr(), xt.data());
        Tensor dw(layer.weight.shape());
        detail::Gemm(in, out, n, xt.data(), g.ptr(), dw.ptr());
        slot.weight = lc.weight_mask.empty() ? std::move(dw)
                                             : fake_quantize_backward(dw, lc.weight_mask);
        slot.bias = Tensor(Shape{out});
        for (int j = 0; j < out; ++j) {
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += g[static_cast<std::size_t>(i) * out + j];
          slot.bias[j] = static_cast<float>(acc);
        }
        if (need_input) {
          std::vector<float> wt(static_cast<std::size_t>(in) * out);
          detail::Transpose(in, out, w.ptr(), wt.data());
          Tensor dx(Shape{n, in});
          detail::Gemm(n, in, out, g.ptr(), wt.data(), dx.ptr());
          g = std::move(dx);
        }
        break;
      }
      case LayerKind::kDropout:
        if (!lc.dropout_mask.empty()) {
          const float inv = 1.0f / (1.0f - s.dropout_p);
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = lc.dropout_mask[i] ? g[i] * inv : 0.0f;
        }
        break;
    }
  }

  Gradients grads;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    Slot& slot = slots[i];
    if (!layer.weight.empty()) grads.push_back(std::move(slot.weight));
    if (!layer.bias.empty()) grads.push_back(std::move(slot.bias));
    if (layer.bn) {
      grads.push_back(std::move(slot.gamma));
      grads.push_back(std::move(slot.beta));
    }
  }
  return grads;
}

// Applies the batch-norm running statistics gathered by a train-mode forward.
inline void commit_batch_statistics(Model& model, const Cache& cache) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer& layer = model.layers[i];
    const LayerCache& lc = cache.layers[i];
    if (!layer.bn || !lc.batch_stats) continue;
    BatchNormState& bn = *layer.bn;
    const double mom = bn.momentum;
    for (int c = 0; c < bn.channels(); ++c) {
      bn.running_mean[c] = static_cast<float>((1.0 - mom) * bn.running_mean[c] +
                                              mom * lc.batch_mean[c]);
      bn.running_var[c] = static_cast<float>((1.0 - mom) * bn.running_var[c] +
                                             mom * lc.batch_var[c]);
    }
  }
}

}  // namespace qdk

#endif  // QDK_NN_FORWARD_HPP_

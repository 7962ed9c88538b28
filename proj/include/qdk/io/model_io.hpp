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

// The .qdk container. All integers and reals are little-endian; reals are
// IEEE-754 bit patterns, so a round trip is bit-exact. Byte layout is
// documented in README.md.

#ifndef QDK_IO_MODEL_IO_HPP_
#define QDK_IO_MODEL_IO_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/int8/qmodel.hpp"
#include "qdk/nn/layer.hpp"
#include "qdk/quant/scheme.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

inline constexpr char kQdkMagic[4] = {'Q', 'D', 'K', '1'};
inline constexpr std::uint8_t kFlagQuantized = 1u << 0;
inline constexpr std::uint8_t kFlagBnFrozen = 1u << 1;

// Layout sizes, useful for size accounting.
inline constexpr std::size_t kQdkHeaderBytes = 4 + 1 + 1 + 8 + 4 * 4 + 4;
inline constexpr std::size_t kQdkQuantParamBytes = 8 + 1;
inline constexpr std::size_t kQdkQuantLayerSpecBytes = 8;
inline constexpr std::size_t kQdkQuantLayerParamBytes =
    2 * kQdkQuantParamBytes + 4 + 1;  // weight qp, output qp, m0, n

using AnyModel = std::variant<Model, QuantizedModel>;

namespace detail {

class ByteWriter {
 public:
  void U8(std::uint8_t v) { buf_.push_back(v); }
  void U16(std::uint16_t v) { Le(v, 2); }
  void U32(std::uint32_t v) { Le(v, 4); }
  void I32(std::int32_t v) { Le(static_cast<std::uint32_t>(v), 4); }
  void F32(float v) { Le(std::bit_cast<std::uint32_t>(v), 4); }
  void F64(double v) { Le(std::bit_cast<std::uint64_t>(v), 8); }
  void Raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void Floats(std::span<const float> v) {
    for (float f : v) F32(f);
  }

  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void Le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t U8(const char* what) { return static_cast<std::uint8_t>(Le(1, what)); }
  std::uint16_t U16(const char* what) { return static_cast<std::uint16_t>(Le(2, what)); }
  std::uint32_t U32(const char* what) { return static_cast<std::uint32_t>(Le(4, what)); }
  std::int32_t I32(const char* what) {
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(Le(4, what)));
  }
  float F32(const char* what) { return std::bit_cast<float>(static_cast<std::uint32_t>(Le(4, what))); }
  double F64(const char* what) { return std::bit_cast<double>(Le(8, what)); }

  std::span<const std::uint8_t> Take(std::size_t n, const char* what) {
    Need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  Tensor Floats(Shape shape, const char* what) {
    Need(shape.numel() * 4, what);
    Tensor t(shape);
    for (float& v : t.data()) v = F32(what);
    return t;
  }

 private:
  void Need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(pos_, std::string("truncated file while reading ") + what);
    }
  }

  std::uint64_t Le(int n, const char* what) {
    Need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint16_t Narrow16(int v, const char* what) {
  if (v < 0 || v > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError(std::string(what) + " does not fit the file format: " + std::to_string(v));
  }
  return static_cast<std::uint16_t>(v);
}

inline std::uint8_t Narrow8(int v, const char* what) {
  if (v < 0 || v > 255) {
    throw ContractError(std::string(what) + " does not fit the file format: " + std::to_string(v));
  }
  return static_cast<std::uint8_t>(v);
}

inline void WriteHeader(ByteWriter& w, std::uint8_t flags, const ModelMeta& m,
                        std::size_t layers) {
  w.Raw(kQdkMagic, 4);
  w.U8(flags);
  w.U8(static_cast<std::uint8_t>(m.family));
  w.F64(m.width_multiplier);
  w.U32(static_cast<std::uint32_t>(m.num_classes));
  w.U32(static_cast<std::uint32_t>(m.in_channels));
  w.U32(static_cast<std::uint32_t>(m.in_h));
  w.U32(static_cast<std::uint32_t>(m.in_w));
  w.U32(static_cast<std::uint32_t>(layers));
}

struct Header {
  std::uint8_t flags = 0;
  ModelMeta meta;
  std::uint32_t layers = 0;
};

inline int ReadDim(ByteReader& r, const char* what, std::uint32_t limit = 1u << 16) {
  const std::size_t at = r.offset();
  const std::uint32_t v = r.U32(what);
  if (v == 0 || v > limit) throw ParseError(at, std::string("implausible ") + what);
  return static_cast<int>(v);
}

inline Header ReadHeader(ByteReader& r) {
  const auto magic = r.Take(4, "magic");
  if (std::memcmp(magic.data(), kQdkMagic, 4) != 0) throw ParseError(0, "bad magic, not a .qdk file");
  Header h;
  std::size_t at = r.offset();
  h.flags = r.U8("flags");
  if (h.flags & ~(kFlagQuantized | kFlagBnFrozen)) throw ParseError(at, "unknown flag bits");
  at = r.offset();
  const std::uint8_t family = r.U8("family");
  if (family > static_cast<std::uint8_t>(Family::kStudent)) throw ParseError(at, "unknown model family");
  h.meta.family = static_cast<Family>(family);
  at = r.offset();
  h.meta.width_multiplier = r.F64("width multiplier");
  if (!(h.meta.width_multiplier > 0.0) || !std::isfinite(h.meta.width_multiplier)) {
    throw ParseError(at, "width multiplier must be finite and > 0");
  }
  h.meta.num_classes = ReadDim(r, "num_classes");
  h.meta.in_channels = ReadDim(r, "input channels");
  h.meta.in_h = ReadDim(r, "input height");
  h.meta.in_w = ReadDim(r, "input width");
  h.layers = r.U32("layer count");
  if (h.layers > 4096) throw ParseError(r.offset() - 4, "implausible layer count");
  return h;
}

inline void WriteQuantParams(ByteWriter& w, const QuantParams& qp) {
  w.F64(qp.scale);
  w.U8(Narrow8(qp.zero_point, "zero point"));
}

inline QuantParams ReadQuantParams(ByteReader& r) {
  const std::size_t at = r.offset();
  QuantParams qp;
  qp.scale = r.F64("scale");
  qp.zero_point = r.U8("zero point");
  if (!(qp.scale > 0.0) || !std::isfinite(qp.scale)) {
    throw ParseError(at, "scale must be finite and > 0");
  }
  return qp;
}

// Float layer record:
//   kind u8, conv_kind u8, relu u8, presence u8 (bit0 weight, bit1 bias,
//   bit2 batch norm), in u32, out u32, kernel u8, stride u8, padding u8,
//   dropout_p f32, then weight / bias / bn(gamma, beta, mean, var, eps,
//   momentum) as present.
inline void WriteFloatLayer(ByteWriter& w, const Layer& l) {
  const LayerSpec& s = l.spec;
  w.U8(static_cast<std::uint8_t>(s.kind));
  w.U8(static_cast<std::uint8_t>(s.conv_kind));
  w.U8(s.relu ? 1 : 0);
  const std::uint8_t presence = (l.weight.empty() ? 0 : 1) | (l.bias.empty() ? 0 : 2) |
                                (l.bn ? 4 : 0);
  w.U8(presence);
  w.U32(static_cast<std::uint32_t>(s.in_channels));
  w.U32(static_cast<std::uint32_t>(s.out_channels));
  w.U8(Narrow8(s.kernel, "kernel"));
  w.U8(Narrow8(s.stride, "stride"));
  w.U8(Narrow8(s.padding, "padding"));
  w.F32(s.dropout_p);
  if (!l.weight.empty()) {
    if (!(l.weight.shape() == expected_weight_shape(s))) {
      throw ShapeError("weight shape " + l.weight.shape().ToString() + " does not match layer");
    }
    w.Floats(l.weight.data());
  }
  if (!l.bias.empty()) {
    if (l.bias.size() != static_cast<std::size_t>(s.out_channels)) {
      throw ShapeError("bias size does not match layer");
    }
    w.Floats(l.bias.data());
  }
  if (l.bn) {
    const BatchNormState& bn = *l.bn;
    const std::size_t c = static_cast<std::size_t>(s.out_channels);
    for (const Tensor* t : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) {
      if (t->size() != c) throw ShapeError("batch norm size does not match layer");
      w.Floats(t->data());
    }
    w.F32(bn.eps);
    w.F32(bn.momentum);
  }
}

inline Layer ReadFloatLayer(ByteReader& r) {
  Layer l;
  LayerSpec& s = l.spec;
  std::size_t at = r.offset();
  const std::uint8_t kind = r.U8("layer kind");
  if (kind > static_cast<std::uint8_t>(LayerKind::kFusedConv)) throw ParseError(at, "unknown layer kind");
  s.kind = static_cast<LayerKind>(kind);
  at = r.offset();
  const std::uint8_t conv_kind = r.U8("conv kind");
  if (conv_kind > static_cast<std::uint8_t>(LayerKind::kFusedConv)) throw ParseError(at, "unknown conv kind");
  s.conv_kind = static_cast<LayerKind>(conv_kind);
  at = r.offset();
  const std::uint8_t relu = r.U8("relu flag");
  if (relu > 1) throw ParseError(at, "relu flag must be 0 or 1");
  s.relu = relu == 1;
  at = r.offset();
  const std::uint8_t presence = r.U8("parameter presence");
  if (presence & ~7u) throw ParseError(at, "unknown parameter presence bits");
  at = r.offset();
  s.in_channels = static_cast<int>(r.U32("in channels"));
  s.out_channels = static_cast<int>(r.U32("out channels"));
  if (s.in_channels < 0 || s.in_channels > (1 << 16) || s.out_channels < 0 ||
      s.out_channels > (1 << 16)) {
    throw ParseError(at, "implausible channel count");
  }
  s.kernel = r.U8("kernel");
  s.stride = r.U8("stride");
  s.padding = r.U8("padding");
  at = r.offset();
  s.dropout_p = r.F32("dropout probability");
  if (!(s.dropout_p >= 0.0f && s.dropout_p < 1.0f)) throw ParseError(at, "dropout must be in [0, 1)");
  const bool weighted = s.kind == LayerKind::kDense || s.kind == LayerKind::kFusedConv || is_conv(s.kind);
  if (((presence & 1) != 0) != weighted) throw ParseError(at, "weight presence does not match layer kind");
  if (presence & 1) {
    if (s.kind != LayerKind::kDense && (s.kernel < 1 || s.stride < 1)) {
      throw ParseError(at, "kernel and stride must be >= 1");
    }
    l.weight = r.Floats(expected_weight_shape(s), "weights");
  }
  if (presence & 2) l.bias = r.Floats(Shape{s.out_channels}, "bias");
  if (presence & 4) {
    BatchNormState bn;
    const int c = s.out_channels;
    bn.gamma = r.Floats(Shape{c}, "batch norm gamma");
    bn.beta = r.Floats(Shape{c}, "batch norm beta");
    bn.running_mean = r.Floats(Shape{c}, "batch norm mean");
    at = r.offset();
    bn.running_var = r.Floats(Shape{c}, "batch norm variance");
    for (float v : bn.running_var.data())
      if (!(v >= 0.0f)) throw ParseError(at, "negative running variance");
    at = r.offset();
    bn.eps = r.F32("batch norm epsilon");
    if (!(bn.eps > 0.0f)) throw ParseError(at, "batch norm epsilon must be > 0");
    bn.momentum = r.F32("batch norm momentum");
    l.bn = std::move(bn);
  }
  return l;
}

// Quantized layer record:
//   kind u8 (bit7 relu), kernel u8, stride u8, padding u8, in u16, out u16,
//   then for weighted layers: weight S f64, Z u8; output S f64, Z u8;
//   m0 i32; n u8; weights u8 x numel; biases i32 x out.
inline Shape QuantizedWeightShape(const QuantizedLayer& l) {
  switch (l.kind) {
    case QLayerKind::kDense: return Shape{l.in_channels, l.out_channels};
    case QLayerKind::kDepthwiseConv: return Shape{l.out_channels, 1, l.kernel, l.kernel};
    default: return Shape{l.out_channels, l.in_channels, l.kernel, l.kernel};
  }
}

inline void WriteQuantizedLayer(ByteWriter& w, const QuantizedLayer& l) {
  w.U8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(l.kind) | (l.relu ? 0x80 : 0)));
  w.U8(Narrow8(l.kernel, "kernel"));
  w.U8(Narrow8(l.stride, "stride"));
  w.U8(Narrow8(l.padding, "padding"));
  w.U16(Narrow16(l.in_channels, "in channels"));
  w.U16(Narrow16(l.out_channels, "out channels"));
  if (!has_weights(l.kind)) return;
  if (!(l.weight_shape == QuantizedWeightShape(l)) || l.weight.size() != l.weight_shape.numel() ||
      l.bias.size() != static_cast<std::size_t>(l.out_channels)) {
    throw ShapeError(std::string(to_string(l.kind)) + ": parameter sizes do not match layer");
  }
  WriteQuantParams(w, l.weight_qp);
  WriteQuantParams(w, l.output_qp);
  w.I32(l.multiplier.m0_fixed);
  w.U8(Narrow8(l.multiplier.shift, "requantization shift"));
  w.Raw(l.weight.data(), l.weight.size());
  for (std::int32_t b : l.bias) w.I32(b);
}

inline QuantizedLayer ReadQuantizedLayer(ByteReader& r, const QuantParams& input_qp) {
  QuantizedLayer l;
  std::size_t at = r.offset();
  const std::uint8_t kind = r.U8("layer kind");
  if ((kind & 0x7f) > static_cast<std::uint8_t>(QLayerKind::kDense)) {
    throw ParseError(at, "unknown quantized layer kind");
  }
  l.kind = static_cast<QLayerKind>(kind & 0x7f);
  l.relu = (kind & 0x80) != 0;
  l.kernel = r.U8("kernel");
  l.stride = r.U8("stride");
  l.padding = r.U8("padding");
  l.in_channels = r.U16("in channels");
  l.out_channels = r.U16("out channels");
  l.input_qp = input_qp;
  if (!has_weights(l.kind)) {
    l.output_qp = l.weight_qp = input_qp;
    return l;
  }
  if (l.kind != QLayerKind::kDense && (l.kernel < 1 || l.stride < 1)) {
    throw ParseError(at, "kernel and stride must be >= 1");
  }
  l.weight_shape = QuantizedWeightShape(l);
  l.weight_qp = ReadQuantParams(r);
  l.output_qp = ReadQuantParams(r);
  at = r.offset();
  l.multiplier.m0_fixed = r.I32("requantization multiplier");
  l.multiplier.shift = r.U8("requantization shift");
  RequantMultiplier expected;
  try {
    expected = derive_requant_multiplier(l.input_qp.scale, l.weight_qp.scale, l.output_qp.scale);
  } catch (const Error& e) {
    throw ParseError(at, std::string("inconsistent scales: ") + e.what());
  }
  if (!(expected == l.multiplier)) {
    throw ParseError(at, "requantization multiplier does not match the layer scales");
  }
  const auto w = r.Take(l.weight_shape.numel(), "quantized weights");
  l.weight.assign(w.begin(), w.end());
  l.bias.resize(l.out_channels);
  for (std::int32_t& b : l.bias) b = r.I32("quantized bias");
  return l;
}

inline void CheckEnd(const ByteReader& r) {
  if (!r.done()) throw ParseError(r.offset(), "trailing bytes after the last layer");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_model(const Model& model) {
  infer_shapes(model);
  detail::ByteWriter w;
  detail::WriteHeader(w, model.bn_frozen ? kFlagBnFrozen : 0, model.meta, model.layers.size());
  for (const Layer& l : model.layers) detail::WriteFloatLayer(w, l);
  return std::move(w.bytes());
}

inline std::vector<std::uint8_t> encode_model(const QuantizedModel& model) {
  validate(model);
  detail::ByteWriter w;
  detail::WriteHeader(w, kFlagQuantized, model.meta, model.layers.size());
  detail::WriteQuantParams(w, model.input_qp);
  for (const QuantizedLayer& l : model.layers) detail::WriteQuantizedLayer(w, l);
  return std::move(w.bytes());
}

inline AnyModel decode_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const detail::Header h = detail::ReadHeader(r);
  const std::size_t body = r.offset();
  if (h.flags & kFlagQuantized) {
    if (h.flags & kFlagBnFrozen) throw ParseError(4, "quantized models carry no batch norm");
    QuantizedModel qm;
    qm.meta = h.meta;
    qm.input_qp = detail::ReadQuantParams(r);
    QuantParams current = qm.input_qp;
    for (std::uint32_t i = 0; i < h.layers; ++i) {
      qm.layers.push_back(detail::ReadQuantizedLayer(r, current));
      current = qm.layers.back().output_qp;
    }
    detail::CheckEnd(r);
    try {
      validate(qm);
    } catch (const Error& e) {
      throw ParseError(body, std::string("invalid quantized model: ") + e.what());
    }
    return qm;
  }
  Model m;
  m.meta = h.meta;
  m.bn_frozen = (h.flags & kFlagBnFrozen) != 0;
  for (std::uint32_t i = 0; i < h.layers; ++i) m.layers.push_back(detail::ReadFloatLayer(r));
  detail::CheckEnd(r);
  try {
    infer_shapes(m);
  } catch (const Error& e) {
    throw ParseError(body, std::string("invalid model: ") + e.what());
  }
  return m;
}

namespace detail {

inline std::size_t WriteFile(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("failed writing " + path);
  return bytes.size();
}

}  // namespace detail

// Returns the number of bytes written.
inline std::size_t save_model(const Model& model, const std::string& path) {
  return detail::WriteFile(encode_model(model), path);
}

inline std::size_t save_model(const QuantizedModel& model, const std::string& path) {
  return detail::WriteFile(encode_model(model), path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline AnyModel load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

inline Model load_float_model(const std::string& path) {
  AnyModel m = load_model(path);
  if (auto* f = std::get_if<Model>(&m)) return std::move(*f);
  throw ConfigError(path + " holds a quantized model; a float model is required");
}

inline QuantizedModel load_quantized_model(const std::string& path) {
  AnyModel m = load_model(path);
  if (auto* q = std::get_if<QuantizedModel>(&m)) return std::move(*q);
  throw ConfigError(path + " holds a float model; a quantized model is required");
}

}  // namespace qdk

#endif  // QDK_IO_MODEL_IO_HPP_

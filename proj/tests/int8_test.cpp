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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qdk/distill/train.hpp"
#include "qdk/error.hpp"
#include "qdk/int8/engine.hpp"
#include "qdk/int8/kernels.hpp"
#include "qdk/nn/models.hpp"
#include "qdk/quant/convert.hpp"
#include "qdk/quant/fuse.hpp"
#include "test_util.hpp"

namespace qdk {
namespace {

using testing::ConvertedRandomStudent;
using testing::RandomTensor;

// round_half_away(acc * m0 / 2^(31 + n)) in 64-bit-mantissa long double,
// which holds the 62-bit product exactly.
long long RequantOracle(std::int32_t acc, const RequantMultiplier& rm) {
  const long double prod = static_cast<long double>(acc) * rm.m0_fixed;
  return std::llround(std::ldexp(prod, -31 - rm.shift));
}

TEST(RequantizeTest, Examples) {
  const RequantMultiplier rm = derive_requant_multiplier(0.01, 0.01, 0.02);  // M = 0.005
  EXPECT_EQ(requantize(0, rm, 37), 37);
  EXPECT_EQ(requantize(200, rm, 37), 38);
  EXPECT_EQ(requantize(-200, rm, 37), 36);
  EXPECT_EQ(requantize(1 << 30, rm, 37), 255);
  EXPECT_EQ(requantize(-(1 << 30), rm, 37), 0);
}

TEST(RequantizeTest, ExactPowerOfTwoProductGivesOneStep) {
  for (int n : {0, 3, 9}) {
    const RequantMultiplier rm{1 << 30, n};
    // acc * 2^30 == 2^(31 + n)  =>  acc = 2^(n + 1)
    EXPECT_EQ(requantize(1 << (n + 1), rm, 100), 101) << n;
  }
}

TEST(RequantizeTest, RoundsHalfAwayFromZero) {
  EXPECT_EQ(rounding_shift(3, 1), 2);
  EXPECT_EQ(rounding_shift(-3, 1), -2);
  EXPECT_EQ(rounding_shift(5, 2), 1);   // 1.25
  EXPECT_EQ(rounding_shift(6, 2), 2);   // 1.5
  EXPECT_EQ(rounding_shift(-6, 2), -2);
  EXPECT_EQ(rounding_shift(7, 0), 7);
}

TEST(RequantizeTest, MatchesWideOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int32_t> acc(-(1 << 24), 1 << 24);
  std::uniform_real_distribution<double> e(-6.0, -0.01);
  for (int i = 0; i < 100000; ++i) {
    const RequantMultiplier rm = derive_requant_multiplier(std::pow(10.0, e(rng)), 1.0, 1.0);
    const std::int32_t a = acc(rng);
    ASSERT_EQ(requantize_raw(a, rm), RequantOracle(a, rm)) << a;
    const long long q = std::clamp<long long>(128 + RequantOracle(a, rm), 0, 255);
    ASSERT_EQ(requantize(a, rm, 128), q);
  }
}

TEST(RequantizeTest, RowMatchesScalarPath) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int32_t> acc(-(1 << 24), 1 << 24);
  std::uniform_real_distribution<double> e(-6.0, -0.01);
  std::uniform_int_distribution<int> zp(0, 255);
  for (int trial = 0; trial < 2000; ++trial) {
    QuantizedLayer l;
    l.multiplier = derive_requant_multiplier(std::pow(10.0, e(rng)), 1.0, 1.0);
    l.output_qp = QuantParams{0.1, zp(rng)};
    l.relu = trial % 2 == 0;
    std::vector<std::int32_t> a(37);
    for (auto& v : a) v = acc(rng);
    a[0] = 0;
    a[1] = -a[2];
    std::vector<std::uint8_t> out(a.size());
    detail::RequantizeRow(a.data(), static_cast<int>(a.size()), l, out.data());
    const int lo = l.relu ? l.output_qp.zero_point : 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const int expect = std::max<int>(lo, requantize(a[i], l.multiplier, l.output_qp.zero_point));
      ASSERT_EQ(out[i], expect) << "acc " << a[i];
    }
  }
}

TEST(RequantizeTest, RowRoundsTiesAwayFromZero) {
  QuantizedLayer l;
  l.multiplier = RequantMultiplier{1 << 30, 1};  // M = 1/4
  l.output_qp = QuantParams{0.1, 128};
  const std::vector<std::int32_t> a = {2, -2, 6, -6, 5, -5};
  std::vector<std::uint8_t> out(a.size());
  detail::RequantizeRow(a.data(), static_cast<int>(a.size()), l, out.data());
  EXPECT_EQ(out, (std::vector<std::uint8_t>{129, 127, 130, 126, 129, 127}));
}

TEST(QmatmulTest, ZeroPointInputsGiveZeroPointOutput) {
  const QuantizedTensor a(Shape{3, 4}, QuantParams{0.1, 17});
  const QuantizedTensor b(Shape{4, 2}, QuantParams{0.2, 200});
  const QuantParams out{0.5, 99};
  const QuantizedTensor c = qmatmul(a, b, out, derive_requant_multiplier(0.1, 0.2, 0.5));
  for (auto v : c.data) EXPECT_EQ(v, 99);
}

TEST(QmatmulTest, AbsorbingWithSharedZeroPoint) {
  const QuantParams qp{0.05, 128};
  const QuantizedTensor a(Shape{2, 5}, qp), b(Shape{5, 3}, qp);
  const QuantizedTensor c = qmatmul(a, b, qp, derive_requant_multiplier(0.05, 0.05, 0.05));
  for (auto v : c.data) EXPECT_EQ(v, 128);
}

TEST(QmatmulTest, OneByOneExample) {
  const QuantizedTensor a(Shape{1, 1}, {130}, QuantParams{0.01, 128});
  const QuantizedTensor b(Shape{1, 1}, {200}, QuantParams{0.01, 100});
  const QuantParams out{0.02, 50};
  const QuantizedTensor c = qmatmul(a, b, out, derive_requant_multiplier(0.01, 0.01, 0.02));
  EXPECT_EQ(c.data[0], 51);
}

TEST(QmatmulTest, RandomEightByEightWithinOutputStep) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor af = RandomTensor(Shape{8, 8}, rng, -1.0f, 1.0f);
    const Tensor bf = RandomTensor(Shape{8, 8}, rng, -0.5f, 2.0f);
    const QuantizedTensor a = quantize_tensor(af, qparams_from_values(af.data()));
    const QuantizedTensor b = quantize_tensor(bf, qparams_from_values(bf.data()));
    const Tensor ref = testing::NaiveMatmul(dequantize_tensor(a), dequantize_tensor(b));
    const QuantParams out = qparams_from_values(ref.data());
    const QuantizedTensor c =
        qmatmul(a, b, out, derive_requant_multiplier(a.qp.scale, b.qp.scale, out.scale));
    EXPECT_LE(testing::MaxAbsDiff(dequantize_tensor(c), ref), out.scale);
  }
}

TEST(QmatmulTest, ShapeMismatch) {
  const QuantizedTensor a(Shape{2, 3}, QuantParams{}), b(Shape{2, 3}, QuantParams{});
  EXPECT_THROW(qmatmul(a, b, QuantParams{}, RequantMultiplier{}), DimensionError);
}

TEST(KernelOracleTest, RandomShapesWithinOneAndAHalfSteps) {
  std::mt19937_64 rng(3);
  int ran = 0;
  for (int i = 0; i < 1000; ++i) {
    const testing::KernelTrial t = testing::RandomKernelTrial(rng);
    if (t.what.empty()) continue;
    ++ran;
    ASSERT_LE(t.max_err, 1.5) << t.what;
  }
  EXPECT_GT(ran, 900);
}

TEST(QconvTest, IdentityOneByOne) {
  const QuantParams qp{0.03, 40};
  const QuantizedLayer l = testing::MakeQuantizedLayer(
      QLayerKind::kPointwiseConv, Tensor::Filled(Shape{1, 1, 1, 1}, 1.0f), Tensor(Shape{1}), 1, 0,
      qp, qp, false);
  std::mt19937_64 rng(4);
  QuantizedTensor in(Shape{2, 1, 5, 5}, qp);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& v : in.data) v = static_cast<std::uint8_t>(byte(rng));
  EXPECT_EQ(qconv2d(in, l).data, in.data);
}

TEST(QconvTest, FusedReluClampsAtZeroPoint) {
  const QuantParams in_qp{0.02, 100}, out_qp{0.05, 60};
  Tensor w = Tensor::Filled(Shape{2, 1, 3, 3}, 0.5f);
  const Tensor b(Shape{2}, {-100.0f, 0.0f});  // channel 0 always negative
  const QuantizedLayer l = testing::MakeQuantizedLayer(QLayerKind::kConv, w, b, 1, 1, in_qp, out_qp, true);
  std::mt19937_64 rng(5);
  QuantizedTensor in(Shape{1, 1, 4, 4}, in_qp);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& v : in.data) v = static_cast<std::uint8_t>(byte(rng));
  const QuantizedTensor y = qconv2d(in, l);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(y.data[i], 60);
  for (int i = 16; i < 32; ++i) EXPECT_GE(y.data[i], 60);
  const QuantizedLayer dw = testing::MakeQuantizedLayer(
      QLayerKind::kDepthwiseConv, Tensor::Filled(Shape{1, 1, 3, 3}, 0.5f), Tensor(Shape{1}, {-100.0f}),
      1, 1, in_qp, out_qp, true);
  for (auto v : qdepthwise_conv2d(in, dw).data) EXPECT_EQ(v, 60);
}

// Float fused conv on the dequantized input. As after QAT, the float
// weights already sit on their quantization grid; the float bias does not.
void CheckAgainstFloatLayer(QLayerKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const bool dw = kind == QLayerKind::kDepthwiseConv;
  const int ci = 6, co = dw ? 6 : 5;
  Tensor w = RandomTensor(Shape{co, dw ? 1 : ci, 3, 3}, rng, -0.5f, 0.5f);
  w = fake_quantize(w, qparams_from_values(w.data()));
  const Tensor b = RandomTensor(Shape{co}, rng, -0.2f, 0.2f);
  const Tensor xf = RandomTensor(Shape{2, ci, 9, 9}, rng, 0.0f, 1.0f);
  const QuantizedTensor in = quantize_tensor(xf, qparams_from_values(xf.data()));
  Tensor ref = dw ? depthwise_conv2d(dequantize_tensor(in), w, b, 2, 1)
                  : conv2d(dequantize_tensor(in), w, b, 2, 1);
  for (float& v : ref.data()) v = std::max(v, 0.0f);
  const QuantParams out = qparams_from_values(ref.data());
  const QuantizedLayer l = testing::MakeQuantizedLayer(kind, w, b, 2, 1, in.qp, out, true);
  const Tensor got = dequantize_tensor(run_quantized_layer(in, l));
  std::vector<double> err(got.size());
  for (std::size_t i = 0; i < got.size(); ++i) err[i] = std::abs(double(got[i]) - ref[i]);
  std::sort(err.begin(), err.end());
  EXPECT_LE(err.back(), out.scale);
  EXPECT_LE(err[err.size() * 99 / 100], out.scale / 2);
}

TEST(QconvTest, RandomLayerMatchesFloatLayer) {
  for (std::uint64_t s : {6, 7, 8}) CheckAgainstFloatLayer(QLayerKind::kConv, s);
}

TEST(QconvTest, RandomDepthwiseLayerMatchesFloatLayer) {
  for (std::uint64_t s : {9, 10, 11}) CheckAgainstFloatLayer(QLayerKind::kDepthwiseConv, s);
}

TEST(QconvTest, ChannelMismatchIsDimensionError) {
  const QuantizedLayer l = testing::MakeQuantizedLayer(
      QLayerKind::kConv, Tensor::Filled(Shape{1, 2, 1, 1}, 1.0f), Tensor(Shape{1}), 1, 0,
      QuantParams{0.1, 0}, QuantParams{1.0, 0}, false);
  EXPECT_THROW(qconv2d(QuantizedTensor(Shape{1, 3, 2, 2}, QuantParams{0.1, 0}), l), DimensionError);
}

TEST(QglobalAvgPoolTest, MatchesRoundedMean) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> byte(0, 255);
  QuantizedTensor in(Shape{2, 3, 4, 5}, QuantParams{0.1, 90});
  for (auto& v : in.data) v = static_cast<std::uint8_t>(byte(rng));
  const QuantizedTensor out = qglobal_avg_pool(in);
  ASSERT_EQ(out.shape, Shape({2, 3}));
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 20; ++j) s += in.data[i * 20 + j] - 90;
    EXPECT_EQ(out.data[i], 90 + std::lround(s / 20)) << i;
  }
}

TEST(QuantizedForwardTest, DeterministicAcrossRunsAndThreads) {
  const QuantizedModel qm = ConvertedRandomStudent(13);
  std::mt19937_64 rng(13);
  const Tensor x = RandomTensor(Shape{9, 1, 32, 32}, rng, 0.0f, 1.0f);
  const Tensor one = quantized_forward(qm, x, 1);
  EXPECT_EQ(quantized_forward(qm, x, 1), one);
  EXPECT_EQ(quantized_forward(qm, x, 4), one);
  EXPECT_EQ(quantized_forward(qm, x, 16), one);
}

TEST(QuantizedForwardTest, RandomModelLogitsInRepresentableRange) {
  const QuantizedModel qm = ConvertedRandomStudent(14);
  const QuantParams& qp = qm.output_qp();
  std::mt19937_64 rng(14);
  const Tensor logits = quantized_forward(qm, RandomTensor(Shape{4, 1, 32, 32}, rng, 0.0f, 1.0f));
  for (float v : logits.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, qp.scale * (0 - qp.zero_point) - 1e-6);
    EXPECT_LE(v, qp.scale * (255 - qp.zero_point) + 1e-6);
  }
}

TEST(QuantizedForwardTest, TracksFloatFusedModel) {
  const Model fused = fuse_layers(build_student(6, 0.5, 15));
  const QuantizedModel qm = ConvertedRandomStudent(15);
  std::mt19937_64 rng(15);
  const Tensor x = RandomTensor(Shape{4, 1, 32, 32}, rng, 0.0f, 1.0f);
  const Tensor f = forward(fused, x, Mode::kEval).logits, q = quantized_forward(qm, x);
  double range = 0;
  for (float v : f.data()) range = std::max<double>(range, std::abs(v));
  EXPECT_LE(testing::MaxAbsDiff(f, q), 0.2 * range + 4 * qm.output_qp().scale);
}

TEST(QuantizedForwardTest, BrokenChainIsIntegrityError) {
  QuantizedModel qm = ConvertedRandomStudent(16);
  qm.layers[2].input_qp.zero_point ^= 1;
  EXPECT_THROW(validate(qm), IntegrityError);
  EXPECT_THROW(quantized_forward(qm, Tensor(Shape{1, 1, 32, 32})), IntegrityError);
}

TEST(QuantizedForwardTest, WrongInputShapeIsDimensionError) {
  const QuantizedModel qm = ConvertedRandomStudent(17);
  EXPECT_THROW(quantized_forward(qm, Tensor(Shape{1, 1, 28, 28})), DimensionError);
}

TEST(ValidateTest, RejectsBadMultiplierAndShapes) {
  QuantizedModel qm = ConvertedRandomStudent(18);
  EXPECT_NO_THROW(validate(qm));
  QuantizedModel bad = qm;
  bad.layers[0].multiplier.m0_fixed = 5;
  EXPECT_THROW(validate(bad), IntegrityError);
  bad = qm;
  bad.layers[0].weight.pop_back();
  EXPECT_THROW(validate(bad), IntegrityError);
  bad = qm;
  bad.meta.num_classes = 7;
  EXPECT_THROW(validate(bad), IntegrityError);
}

}  // namespace
}  // namespace qdk

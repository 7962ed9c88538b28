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

#include <random>

#include "qdk/error.hpp"
#include "qdk/tensor.hpp"
#include "test_util.hpp"

namespace qdk {
namespace {

using testing::MaxAbsDiff;
using testing::NaiveConv;
using testing::NaiveMatmul;
using testing::RandomTensor;

TEST(ShapeTest, RejectsBadShapes) {
  EXPECT_THROW(Shape({0, 3}), ShapeError);
  EXPECT_THROW(Shape({1, 2, 3, 4, 5}), ShapeError);
  EXPECT_EQ(Shape({2, 3, 4}).numel(), 24u);
}

TEST(TensorTest, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<float>(3)), ShapeError);
  EXPECT_NO_THROW(Tensor(Shape{2, 2}, std::vector<float>(4)));
}

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  const Tensor b = RandomTensor(Shape{2, 5}, rng);
  const Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(matmul(eye, b), b);
}

TEST(MatmulTest, HandExpansion) {
  const Tensor c = matmul(Tensor(Shape{1, 2}, {1, 2}), Tensor(Shape{2, 1}, {3, 4}));
  ASSERT_EQ(c.shape(), Shape({1, 1}));
  EXPECT_FLOAT_EQ(c[0], 11.0f);
}

TEST(MatmulTest, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  for (auto [m, k, n] : {std::tuple{5, 7, 3}, {17, 33, 29}, {4, 1, 9}, {1, 64, 1}}) {
    const Tensor a = RandomTensor(Shape{m, k}, rng), b = RandomTensor(Shape{k, n}, rng);
    EXPECT_LE(MaxAbsDiff(matmul(a, b), NaiveMatmul(a, b)), 1e-5) << m << "x" << k << "x" << n;
  }
}

TEST(MatmulTest, IsLinearInTheRightOperand) {
  std::mt19937_64 rng(3);
  const Tensor a = RandomTensor(Shape{6, 8}, rng);
  const Tensor b1 = RandomTensor(Shape{8, 5}, rng), b2 = RandomTensor(Shape{8, 5}, rng);
  Tensor sum(Shape{8, 5});
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = b1[i] + b2[i];
  const Tensor lhs = matmul(a, sum), r1 = matmul(a, b1), r2 = matmul(a, b2);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], r1[i] + r2[i], 1e-4);
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos) << e.what();
  }
}

TEST(Conv2dTest, IdentityKernel) {
  std::mt19937_64 rng(4);
  const Tensor x = RandomTensor(Shape{2, 1, 5, 6}, rng);
  const Tensor y = conv2d(x, Tensor::Filled(Shape{1, 1, 1, 1}, 1.0f), Tensor(Shape{1}), 1, 0);
  EXPECT_EQ(y, x);
}

TEST(Conv2dTest, OnesKernelOverOnes) {
  const Tensor y = conv2d(Tensor::Filled(Shape{1, 1, 3, 3}, 1.0f),
                          Tensor::Filled(Shape{1, 1, 3, 3}, 1.0f), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), Shape({1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 9.0f);
}

TEST(Conv2dTest, MatchesDirectOracle) {
  std::mt19937_64 rng(5);
  struct Case { int n, ci, h, w, co, k, s, p; };
  for (const Case c : {Case{2, 3, 7, 7, 4, 3, 1, 1}, Case{1, 2, 10, 8, 5, 4, 2, 0},
                       Case{3, 4, 6, 6, 2, 1, 1, 0}, Case{2, 1, 36, 36, 8, 4, 2, 0},
                       Case{1, 5, 5, 5, 3, 3, 2, 1}}) {
    const Tensor x = RandomTensor(Shape{c.n, c.ci, c.h, c.w}, rng);
    const Tensor w = RandomTensor(Shape{c.co, c.ci, c.k, c.k}, rng);
    const Tensor b = RandomTensor(Shape{c.co}, rng);
    EXPECT_LE(MaxAbsDiff(conv2d(x, w, b, c.s, c.p), NaiveConv(x, w, b, c.s, c.p)), 1e-5);
  }
}

TEST(Conv2dTest, OneByOneSpatialEqualsMatmul) {
  std::mt19937_64 rng(6);
  const Tensor x = RandomTensor(Shape{3, 6, 1, 1}, rng);
  const Tensor w = RandomTensor(Shape{4, 6, 1, 1}, rng);
  const Tensor y = conv2d(x, w, Tensor(), 1, 0);
  // y[n, o] = sum_c x[n, c] w[o, c]  ==  X (3x6) * W^T (6x4)
  Tensor wt(Shape{6, 4});
  for (int o = 0; o < 4; ++o)
    for (int c = 0; c < 6; ++c) wt[c * 4 + o] = w[o * 6 + c];
  const Tensor ref = NaiveMatmul(x.Reshaped(Shape{3, 6}), wt);
  EXPECT_LE(MaxAbsDiff(y.Reshaped(Shape{3, 4}), ref), 1e-5);
}

TEST(Conv2dTest, NonIntegralOutputIsShapeError) {
  EXPECT_THROW(conv2d(Tensor(Shape{1, 1, 6, 6}), Tensor(Shape{1, 1, 3, 3}), Tensor(), 2, 0),
               ShapeError);
  EXPECT_THROW(conv2d(Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 3, 3}), Tensor(), 1, 0),
               ShapeError);
}

TEST(Conv2dTest, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(conv2d(Tensor(Shape{1, 2, 4, 4}), Tensor(Shape{1, 3, 3, 3}), Tensor(), 1, 0),
               DimensionError);
}

TEST(DepthwiseConvTest, IdentityFilters) {
  std::mt19937_64 rng(7);
  const Tensor x = RandomTensor(Shape{2, 3, 4, 4}, rng);
  EXPECT_EQ(depthwise_conv2d(x, Tensor::Filled(Shape{3, 1, 1, 1}, 1.0f), Tensor(), 1, 0), x);
}

TEST(DepthwiseConvTest, OnesKernelGivesNinePerChannel) {
  const Tensor y = depthwise_conv2d(Tensor::Filled(Shape{1, 2, 3, 3}, 1.0f),
                                    Tensor::Filled(Shape{2, 1, 3, 3}, 1.0f), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), Shape({1, 2, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 9.0f);
  EXPECT_FLOAT_EQ(y[1], 9.0f);
}

TEST(DepthwiseConvTest, EqualsBlockDiagonalConv) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const int c = 2 + trial % 3, stride = 1 + trial % 2, pad = trial % 2;
    const Tensor x = RandomTensor(Shape{2, c, 7, 7}, rng);
    const Tensor w = RandomTensor(Shape{c, 1, 3, 3}, rng);
    const Tensor b = RandomTensor(Shape{c}, rng);
    Tensor full(Shape{c, c, 3, 3});  // zero off the diagonal blocks
    for (int o = 0; o < c; ++o)
      for (int k = 0; k < 9; ++k) full[(o * c + o) * 9 + k] = w[o * 9 + k];
    EXPECT_LE(MaxAbsDiff(depthwise_conv2d(x, w, b, stride, pad), conv2d(x, full, b, stride, pad)),
              1e-5);
    EXPECT_LE(MaxAbsDiff(depthwise_conv2d(x, w, b, stride, pad), NaiveConv(x, w, b, stride, pad, true)),
              1e-5);
  }
}

TEST(DepthwiseConvTest, ChannelsDoNotMix) {
  std::mt19937_64 rng(9);
  Tensor x = RandomTensor(Shape{1, 3, 5, 5}, rng);
  const Tensor w = RandomTensor(Shape{3, 1, 3, 3}, rng);
  const Tensor y0 = depthwise_conv2d(x, w, Tensor(), 1, 1);
  for (int i = 0; i < 25; ++i) x[25 + i] += 1.0f;  // perturb channel 1 only
  const Tensor y1 = depthwise_conv2d(x, w, Tensor(), 1, 1);
  for (int i = 0; i < 25; ++i) {
    EXPECT_EQ(y0[i], y1[i]);
    EXPECT_EQ(y0[50 + i], y1[50 + i]);
  }
}

TEST(GlobalAvgPoolTest, AveragesEachPlane) {
  Tensor x(Shape{1, 2, 2, 2}, {1, 2, 3, 4, -1, -1, -1, 5});
  const Tensor y = global_avg_pool(x);
  ASSERT_EQ(y.shape(), Shape({1, 2}));
  EXPECT_FLOAT_EQ(y[0], 2.5f);
  EXPECT_FLOAT_EQ(y[1], 0.5f);
}

// Central differences of L = sum(G * conv(x, w)), re-evaluated in 64 bits.
void CheckConvGradients(LayerKind kind, const Tensor& x, const Tensor& w, int stride, int pad,
                        const ConvGrads& g, const Tensor& gout) {
  LayerSpec spec;
  spec.kind = kind;
  spec.in_channels = x.dim(1);
  spec.out_channels = w.dim(0);
  spec.kernel = w.dim(2);
  spec.stride = stride;
  spec.padding = pad;
  testing::RefAct xa{x.dim(0), x.dim(1), x.dim(2), x.dim(3), {x.data().begin(), x.data().end()}};
  std::vector<double> wd(w.data().begin(), w.data().end());
  const std::vector<double> zero(w.dim(0), 0.0);
  auto loss = [&] {
    const testing::RefAct y = testing::RefConv(xa, wd, zero, spec);
    double s = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * gout[i];
    return s;
  };
  const double h = 1e-3;
  auto fd = [&](std::vector<double>& v, std::size_t i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = loss();
    v[i] = keep - h;
    const double down = loss();
    v[i] = keep;
    return (up - down) / (2 * h);
  };
  for (std::size_t i = 0; i < wd.size(); ++i)
    EXPECT_LE(testing::RelErr(g.weight[i], fd(wd, i)), 1e-3) << "weight " << i;
  for (std::size_t i = 0; i < xa.v.size(); ++i)
    EXPECT_LE(testing::RelErr(g.input[i], fd(xa.v, i)), 1e-3) << "input " << i;
}

TEST(ConvBackwardTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const Tensor x = RandomTensor(Shape{2, 2, 5, 5}, rng);
  const Tensor w = RandomTensor(Shape{3, 2, 3, 3}, rng);
  const Tensor gout = RandomTensor(conv2d(x, w, Tensor(), 2, 1).shape(), rng);
  const ConvGrads g = conv2d_backward(x, w, gout, 2, 1);
  CheckConvGradients(LayerKind::kConv, x, w, 2, 1, g, gout);
  // Bias gradient is the sum of grad_out per channel.
  for (int o = 0; o < 3; ++o) {
    double s = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int p = 0; p < 9; ++p) s += gout[(n * 3 + o) * 9 + p];
    EXPECT_NEAR(g.bias[o], s, 1e-5);
  }
}

TEST(ConvBackwardTest, DepthwiseMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const Tensor x = RandomTensor(Shape{2, 3, 6, 6}, rng);
  const Tensor w = RandomTensor(Shape{3, 1, 3, 3}, rng);
  const Tensor gout = RandomTensor(depthwise_conv2d(x, w, Tensor(), 1, 1).shape(), rng);
  CheckConvGradients(LayerKind::kDepthwiseConv, x, w, 1, 1,
                     depthwise_conv2d_backward(x, w, gout, 1, 1), gout);
}

TEST(GlobalAvgPoolTest, BackwardSpreadsEvenly) {
  const Tensor g = global_avg_pool_backward(Shape{1, 2, 2, 2}, Tensor(Shape{1, 2}, {4, 8}));
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(g[i], 1.0f);
  for (int i = 4; i < 8; ++i) EXPECT_FLOAT_EQ(g[i], 2.0f);
}

}  // namespace
}  // namespace qdk

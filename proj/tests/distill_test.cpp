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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qdk/data/dataset.hpp"
#include "qdk/distill/kd.hpp"
#include "qdk/distill/train.hpp"
#include "qdk/error.hpp"
#include "qdk/metrics.hpp"
#include "qdk/nn/models.hpp"
#include "test_util.hpp"

namespace qdk {
namespace {

std::vector<double> RandomLogits(std::size_t n, std::mt19937_64& rng, double scale = 3.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> z(n);
  for (double& v : z) v = d(rng);
  return z;
}

// log softmax(z / T) for one row, via log-sum-exp.
std::vector<double> LogSoftmax(const double* z, int c, double t) {
  double mx = z[0] / t;
  for (int j = 1; j < c; ++j) mx = std::max(mx, z[j] / t);
  double s = 0.0;
  for (int j = 0; j < c; ++j) s += std::exp(z[j] / t - mx);
  std::vector<double> out(c);
  for (int j = 0; j < c; ++j) out[j] = z[j] / t - mx - std::log(s);
  return out;
}

// alpha CE(y, softmax(z_s)) + beta T^2 CE(softmax(z_t/T), softmax(z_s/T)),
// one term at a time.
double KdOracle(const std::vector<double>& zt, const std::vector<double>& zs,
                const std::vector<int>& y, int c, double alpha, double beta, double t) {
  const int n = static_cast<int>(y.size());
  double hard = 0.0, soft = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> ls1 = LogSoftmax(&zs[i * c], c, 1.0);
    hard -= ls1[y[i]];
    const std::vector<double> lt = LogSoftmax(&zt[i * c], c, t);
    const std::vector<double> ls = LogSoftmax(&zs[i * c], c, t);
    for (int j = 0; j < c; ++j) soft -= std::exp(lt[j]) * ls[j];
  }
  return (alpha * hard + beta * t * t * soft) / n;
}

TEST(SoftLabelsTest, Examples) {
  const Tensor half = soft_labels(Tensor(Shape{1, 2}, {0.0f, 0.0f}), 7.0f);
  EXPECT_NEAR(half[0], 0.5, 1e-7);
  EXPECT_NEAR(half[1], 0.5, 1e-7);
  const Tensor p = soft_labels(Tensor(Shape{1, 2}, {2.0f, 0.0f}), 1.0f);
  EXPECT_NEAR(p[0], 0.8808, 1e-4);
  EXPECT_NEAR(p[1], 0.1192, 1e-4);
  const Tensor flat = soft_labels(Tensor(Shape{1, 2}, {2.0f, 0.0f}), 1000.0f);
  EXPECT_LT(flat[0] - flat[1], 0.01);
}

TEST(SoftLabelsTest, RowsSumToOneAndShiftInvariance) {
  std::mt19937_64 rng(1);
  const std::vector<double> z = RandomLogits(5 * 7, rng, 10.0);
  std::vector<double> shifted = z;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) shifted[i * 7 + j] += 100.0 * (i + 1);
  for (double t : {0.5, 1.0, 3.0, 9.0}) {
    const auto p = soft_labels<double>(z, 7, t), q = soft_labels<double>(shifted, 7, t);
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) s += p[i * 7 + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], q[k], 1e-9);
  }
}

TEST(SoftLabelsTest, Errors) {
  EXPECT_THROW(soft_labels(Tensor(Shape{1, 2}, {INFINITY, 0.0f}), 1.0f), NumericError);
  EXPECT_THROW(soft_labels(Tensor(Shape{1, 2}, {NAN, 0.0f}), 1.0f), NumericError);
  EXPECT_THROW(soft_labels(Tensor(Shape{1, 2}), 0.0f), ContractError);
}

TEST(KDConfigTest, AlphaIsOneMinusBeta) {
  const KDConfig c(0.9, 3.0);
  EXPECT_DOUBLE_EQ(c.alpha(), 1.0 - 0.9);
  EXPECT_DOUBLE_EQ(KDConfig().beta(), 0.0);
  EXPECT_THROW(KDConfig(1.1, 3.0), ConfigError);
  EXPECT_THROW(KDConfig(-0.1, 3.0), ConfigError);
  EXPECT_THROW(KDConfig(0.5, 0.0), ConfigError);
}

TEST(KdLossTest, BetaZeroIsCrossEntropy) {
  std::mt19937_64 rng(2);
  const std::vector<double> zt = RandomLogits(4 * 5, rng), zs = RandomLogits(4 * 5, rng);
  const std::vector<int> y = {0, 3, 4, 1};
  std::vector<double> onehot(20, 0.0);
  for (int i = 0; i < 4; ++i) onehot[i * 5 + y[i]] = 1.0;
  const double ce = cross_entropy_rows<double>(onehot, softmax_rows<double>(zs, 5, 1.0), 5);
  for (double t : {1.0, 3.0, 20.0}) EXPECT_EQ(kd_loss<double>(zt, zs, y, 5, KDConfig(0.0, t)), ce);
  EXPECT_NEAR(ce, KdOracle(zt, zs, y, 5, 1.0, 0.0, 1.0), 1e-12);
}

TEST(KdLossTest, IdenticalUniformLogitsGiveLn2) {
  const std::vector<double> z = {0.0, 0.0};
  EXPECT_NEAR(kd_loss<double>(z, z, std::vector<int>{1}, 2, KDConfig(1.0, 1.0)), std::log(2.0),
              1e-15);
}

TEST(KdLossTest, MatchesStepByStepOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6, c = 34;
    const std::vector<double> zt = RandomLogits(n * c, rng), zs = RandomLogits(n * c, rng);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng() % c);
    const double got = kd_loss<double>(zt, zs, y, c, KDConfig(0.9, 3.0));
    EXPECT_NEAR(got, KdOracle(zt, zs, y, c, 1.0 - 0.9, 0.9, 3.0), 1e-10);
  }
}

TEST(KdLossTest, LiteralHardTermUsesTemperature) {
  std::mt19937_64 rng(4);
  const std::vector<double> zt = RandomLogits(3 * 4, rng), zs = RandomLogits(3 * 4, rng);
  const std::vector<int> y = {0, 1, 2};
  // Hard term with the softened student: CE(y, softmax(z_s / T)).
  double hard = 0.0;
  for (int i = 0; i < 3; ++i) hard -= LogSoftmax(&zs[i * 4], 4, 3.0)[y[i]];
  hard /= 3;
  const double soft = KdOracle(zt, zs, y, 4, 0.0, 0.6, 3.0);
  EXPECT_NEAR(kd_loss<double>(zt, zs, y, 4, KDConfig(0.6, 3.0, true)), 0.4 * hard + soft, 1e-12);
}

TEST(KdLossTest, NonNegativeAndBoundedBelowByTeacherEntropy) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> zt = RandomLogits(2 * 6, rng), zs = RandomLogits(2 * 6, rng);
    const std::vector<int> y = {1, 5};
    const double beta = 0.7, t = 4.0;
    const double loss = kd_loss<double>(zt, zs, y, 6, KDConfig(beta, t));
    EXPECT_GE(loss, 0.0);
    const double soft = kd_loss<double>(zt, zs, y, 6, KDConfig(1.0, t));
    const double entropy = kd_loss<double>(zt, zt, y, 6, KDConfig(1.0, t));
    EXPECT_GE(soft, entropy - 1e-12);
  }
}

TEST(KdLossTest, SoftTermScalesWithTemperatureSquared) {
  // z at T1 and z * T2/T1 at T2 give identical soft distributions, so the
  // soft cross-entropy is fixed and the loss ratio is (T2 / T1)^2.
  std::mt19937_64 rng(6);
  const std::vector<double> zt = RandomLogits(3 * 5, rng), zs = RandomLogits(3 * 5, rng);
  const std::vector<int> y = {0, 0, 0};
  const double t1 = 2.0, t2 = 5.0;
  std::vector<double> zt2 = zt, zs2 = zs;
  for (double& v : zt2) v *= t2 / t1;
  for (double& v : zs2) v *= t2 / t1;
  const double l1 = kd_loss<double>(zt, zs, y, 5, KDConfig(1.0, t1));
  const double l2 = kd_loss<double>(zt2, zs2, y, 5, KDConfig(1.0, t2));
  EXPECT_NEAR(l2 / l1, (t2 / t1) * (t2 / t1), 1e-10);
}

TEST(KdLossTest, ShapeMismatchIsShapeError) {
  const std::vector<int> y = {0};
  EXPECT_THROW(kd_loss(Tensor(Shape{1, 3}), Tensor(Shape{1, 4}), y, KDConfig(0.5, 2.0)), ShapeError);
  EXPECT_THROW(kd_loss_grad(Tensor(Shape{2, 3}), Tensor(Shape{1, 3}), y, KDConfig(0.5, 2.0)),
               ShapeError);
  const std::vector<int> bad = {3};
  EXPECT_THROW(kd_loss(Tensor(Shape{1, 3}), Tensor(Shape{1, 3}), bad, KDConfig(0.5, 2.0)),
               ContractError);
}

void CheckGradientByDifferences(const KDConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = 4, c = 6;
  const std::vector<double> zt = RandomLogits(n * c, rng);
  std::vector<double> zs = RandomLogits(n * c, rng);
  const std::vector<int> y = {0, 2, 5, 5};
  const std::vector<double> g = kd_loss_grad<double>(zt, zs, y, c, cfg);
  const double h = 1e-5;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    const double keep = zs[k];
    zs[k] = keep + h;
    const double up = kd_loss<double>(zt, zs, y, c, cfg);
    zs[k] = keep - h;
    const double down = kd_loss<double>(zt, zs, y, c, cfg);
    zs[k] = keep;
    EXPECT_LE(testing::RelErr(g[k], (up - down) / (2 * h), 1e-6), 1e-5) << k;
  }
}

TEST(KdLossGradTest, MatchesFiniteDifferences) {
  CheckGradientByDifferences(KDConfig(0.9, 3.0), 7);
  CheckGradientByDifferences(KDConfig(0.0, 1.0), 8);
  CheckGradientByDifferences(KDConfig(1.0, 7.0), 9);
  CheckGradientByDifferences(KDConfig(0.5, 4.0, true), 10);
}

TEST(KdLossGradTest, RowsSumToZero) {
  std::mt19937_64 rng(11);
  const std::vector<double> zt = RandomLogits(5 * 8, rng), zs = RandomLogits(5 * 8, rng);
  const std::vector<int> y = {0, 1, 2, 3, 7};
  const auto g = kd_loss_grad<double>(zt, zs, y, 8, KDConfig(0.7, 5.0));
  for (int i = 0; i < 5; ++i) {
    double s = 0.0;
    for (int j = 0; j < 8; ++j) s += g[i * 8 + j];
    EXPECT_NEAR(s, 0.0, 1e-9);
  }
}

TEST(KdLossGradTest, IdenticalLogitsWithoutHardTermGiveZero) {
  std::mt19937_64 rng(12);
  const std::vector<double> z = RandomLogits(3 * 4, rng);
  for (double v : kd_loss_grad<double>(z, z, std::vector<int>{0, 1, 2}, 4, KDConfig(1.0, 3.0)))
    EXPECT_EQ(v, 0.0);
}

// ---------------------------------------------------------------------------
// Training loops on a small dataset.

Dataset TinyData(std::uint64_t seed = 5) {
  DatasetOptions opt;
  opt.val_per_class = 6;
  opt.test_per_class = 6;
  const std::vector<int> counts = {24, 16, 12, 10};
  return generate_shapes_dataset(4, counts, seed, opt);
}

TrainConfig TinyTrain(int epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.milestones = {1};
  c.freeze_epoch = 1;
  c.batch_size = 16;
  c.seed = 3;
  return c;
}

bool SameParameters(const Model& a, const Model& b) {
  std::vector<Tensor> pa, pb;
  for_each_parameter(a, [&](const Tensor& t) { pa.push_back(t); });
  for_each_parameter(b, [&](const Tensor& t) { pb.push_back(t); });
  return pa == pb;
}

TEST(TrainFloatTest, BitwiseReproducible) {
  const Dataset d = TinyData();
  std::vector<std::string> log1, log2;
  const Model a = train_float(build_student(4, 0.25, 1), d, TinyTrain(), nullptr, KDConfig(),
                              [&](const EpochRecord& r) { log1.push_back(r.ToLine()); });
  const Model b = train_float(build_student(4, 0.25, 1), d, TinyTrain(), nullptr, KDConfig(),
                              [&](const EpochRecord& r) { log2.push_back(r.ToLine()); });
  EXPECT_TRUE(SameParameters(a, b));
  EXPECT_EQ(log1, log2);
  ASSERT_EQ(log1.size(), 2u);
  EXPECT_EQ(log1[0].rfind("epoch=1 lr=0.05 train_loss=", 0), 0u) << log1[0];
  EXPECT_NE(log1[1].find("lr=0.01 "), std::string::npos) << log1[1];
}

TEST(TrainFloatTest, TeacherIsNotModified) {
  const Dataset d = TinyData();
  const Model teacher = build_teacher(4, 2);
  const Model before = teacher;
  train_float(build_student(4, 0.25, 1), d, TinyTrain(1), &teacher, KDConfig(0.9, 3.0));
  EXPECT_TRUE(SameParameters(teacher, before));
  for (std::size_t i = 0; i < teacher.layers.size(); ++i)
    if (teacher.layers[i].bn) {
      EXPECT_EQ(teacher.layers[i].bn->running_mean, before.layers[i].bn->running_mean);
    }
}

TEST(TrainFloatTest, BetaZeroIgnoresTheTeacher) {
  const Dataset d = TinyData();
  const Model teacher = build_teacher(4, 2);
  const Model a = train_float(build_student(4, 0.25, 1), d, TinyTrain(1), &teacher, KDConfig(0.0, 5.0));
  const Model b = train_float(build_student(4, 0.25, 1), d, TinyTrain(1));
  EXPECT_TRUE(SameParameters(a, b));
}

TEST(TrainFloatTest, ConfigurationErrors) {
  const Dataset d = TinyData();
  EXPECT_THROW(train_float(build_student(4, 0.25), d, TinyTrain(), nullptr, KDConfig(0.5, 2.0)),
               ConfigError);
  const Model wrong = build_teacher(5);
  EXPECT_THROW(train_float(build_student(4, 0.25), d, TinyTrain(), &wrong, KDConfig(0.5, 2.0)),
               ConfigError);
  TrainConfig bad = TinyTrain();
  bad.epochs = 0;
  EXPECT_THROW(train_float(build_student(4, 0.25), d, bad), ConfigError);
}

TEST(TrainFloatTest, LearnsTheEasyTask) {
  const Dataset d = TinyData();
  TrainConfig c = TinyTrain(8);
  c.milestones = {6};
  const Model m = train_float(build_student(4, 0.5, 1), d, c);
  EXPECT_GT(evaluate(m, d.val).mean_per_class_accuracy, 0.5);
}

TEST(QuantizedDistillationTest, DeterministicAndFreezes) {
  const Dataset d = TinyData();
  const Model teacher = build_teacher(4, 2);
  const Model student = build_student(4, 0.25, 1);
  std::vector<std::string> log;
  const QatResult a = quantized_distillation_train_full(
      &teacher, student, d, KDConfig(0.9, 3.0), TinyTrain(3),
      [&](const EpochRecord& r) { log.push_back(r.ToLine()); });
  const QatResult b =
      quantized_distillation_train_full(&teacher, student, d, KDConfig(0.9, 3.0), TinyTrain(3));
  EXPECT_EQ(a.quantized.layers, b.quantized.layers);
  EXPECT_EQ(a.quantized.input_qp, b.quantized.input_qp);
  ASSERT_EQ(log.size(), 3u);
  EXPECT_NE(log[0].find("frozen=0"), std::string::npos);
  EXPECT_NE(log[1].find("frozen=1"), std::string::npos);
  for (const ObserverState& o : a.sim.observers) EXPECT_TRUE(o.frozen);
}

TEST(QuantizedDistillationTest, IntegerModelAgreesWithFusedFloatModel) {
  const Dataset d = TinyData();
  TrainConfig c = TinyTrain(8);
  c.milestones = {6};
  c.freeze_epoch = 6;
  const QatResult r = quantized_distillation_train_full(nullptr, build_student(4, 0.5, 1), d,
                                                        KDConfig(), c);
  const std::vector<int> pf = predict(r.folded, d.test), pq = predict(r.quantized, d.test);
  int agree = 0;
  for (std::size_t i = 0; i < pf.size(); ++i) agree += pf[i] == pq[i];
  EXPECT_GE(static_cast<double>(agree) / pf.size(), 0.9);
}

TEST(QuantizedDistillationTest, ClassMismatchIsConfigError) {
  const Dataset d = TinyData();
  const Model teacher = build_teacher(6);
  EXPECT_THROW(quantized_distillation_train(teacher, build_student(4, 0.25), d, KDConfig(0.9, 3.0),
                                            TinyTrain(1)),
               ConfigError);
}

TEST(PostTrainingQuantizeTest, ProducesValidModel) {
  const Dataset d = TinyData();
  const Model m = train_float(build_student(4, 0.25, 1), d, TinyTrain(1));
  const QuantizedModel qm = post_training_quantize(m, d.train);
  EXPECT_NO_THROW(validate(qm));
  EXPECT_EQ(predict(qm, d.test).size(), static_cast<std::size_t>(d.test.size()));
}

}  // namespace
}  // namespace qdk

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

// Single-thread, batch-1 latency of float and integer models.

#ifndef QDK_CLI_BENCH_HPP_
#define QDK_CLI_BENCH_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/int8/engine.hpp"
#include "qdk/io/model_io.hpp"
#include "qdk/nn/forward.hpp"

namespace qdk {

struct BenchResult {
  int warmup = 0;
  int iterations = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double fps = 0.0;  // 1000 / mean_ms
};

// Nearest-rank percentile of an ascending sample.
inline double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ContractError("percentile of an empty sample");
  const double rank = std::ceil(p / 100.0 * static_cast<double>(sorted.size()));
  const std::size_t idx = static_cast<std::size_t>(std::clamp(rank, 1.0, double(sorted.size())));
  return sorted[idx - 1];
}

inline BenchResult summarize_latencies(std::vector<double> ms, int warmup) {
  BenchResult r;
  r.warmup = warmup;
  r.iterations = static_cast<int>(ms.size());
  double sum = 0.0;
  for (double v : ms) sum += v;
  r.mean_ms = sum / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  r.p50_ms = percentile(ms, 50.0);
  r.p95_ms = percentile(ms, 95.0);
  r.fps = 1000.0 / r.mean_ms;
  return r;
}

// Times `iterations` calls of fn() after `warmup` untimed ones.
template <typename Fn>
BenchResult time_passes(Fn&& fn, int warmup, int iterations) {
  if (iterations < 1 || warmup < 0) throw ContractError("bench needs iterations >= 1, warmup >= 0");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ms(iterations);
  for (int i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  return summarize_latencies(std::move(ms), warmup);
}

namespace detail {

inline Tensor BenchInput(const ModelMeta& m, std::uint64_t seed) {
  Tensor x(Shape{1, m.in_channels, m.in_h, m.in_w});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : x.data()) v = u(rng);
  return x;
}

}  // namespace detail

inline BenchResult bench_model(const Model& model, int warmup, int iterations,
                               std::uint64_t seed = 0) {
  const Tensor x = detail::BenchInput(model.meta, seed);
  volatile float sink = 0.0f;
  return time_passes([&] { sink = forward(model, x, Mode::kEval).logits[0]; }, warmup, iterations);
}

inline BenchResult bench_model(const QuantizedModel& qm, int warmup, int iterations,
                               std::uint64_t seed = 0) {
  const Tensor x = detail::BenchInput(qm.meta, seed);
  volatile float sink = 0.0f;
  return time_passes([&] { sink = quantized_forward(qm, x, 1)[0]; }, warmup, iterations);
}

inline BenchResult bench_model(const AnyModel& m, int warmup, int iterations,
                               std::uint64_t seed = 0) {
  return std::visit([&](const auto& model) { return bench_model(model, warmup, iterations, seed); },
                    m);
}

}  // namespace qdk

#endif  // QDK_CLI_BENCH_HPP_

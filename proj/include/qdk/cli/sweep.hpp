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

// Sequential hyperparameter tuning for distilled students: width first
// (T and beta fixed), then T at the best width, then beta at the best T.
// Every trial uses the same seed, so rows differ only in hyperparameters,
// and the result does not depend on the number of workers.

#ifndef QDK_CLI_SWEEP_HPP_
#define QDK_CLI_SWEEP_HPP_

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "qdk/cli/config.hpp"
#include "qdk/data/dataset.hpp"
#include "qdk/distill/kd.hpp"
#include "qdk/distill/train.hpp"
#include "qdk/metrics.hpp"
#include "qdk/nn/models.hpp"

namespace qdk {

struct SweepRow {
  std::string stage;  // "width", "temperature" or "beta"
  double width = 0.0;
  double temperature = 0.0;
  double beta = 0.0;
  double val_mpca = 0.0;
  double baseline_mpca = 0.0;  // no-KD student of the same width

  bool beats_baseline() const { return val_mpca > baseline_mpca; }
};

struct SweepBaseline {
  double width = 0.0;
  double val_mpca = 0.0;
};

struct SweepResult {
  std::vector<SweepBaseline> baselines;
  std::vector<SweepRow> rows;
  double best_width = 0.0;
  double best_temperature = 0.0;
  double best_beta = 0.0;
};

struct SweepTrial {
  double width = 0.0;
  double temperature = 1.0;
  double beta = 0.0;  // 0: plain student
};

namespace detail {

// Runs fn(i) for i in [0, n) on `workers` threads; results land by index.
inline void ParallelFor(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline int ArgMax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

// Validation mean per-class accuracy of one student trained with `cfg`.
inline double run_sweep_trial(const Model& teacher, const Dataset& data, const SweepTrial& trial,
                              const TrainConfig& cfg) {
  Model student = build_student(teacher.meta.num_classes, trial.width, cfg.seed, cfg.dropout_p);
  const bool kd = trial.beta > 0.0;
  const KDConfig kd_cfg = kd ? KDConfig(trial.beta, trial.temperature) : KDConfig();
  Model trained = train_float(std::move(student), data, cfg, kd ? &teacher : nullptr, kd_cfg);
  return evaluate(trained, data.val).mean_per_class_accuracy;
}

// `cfg` is the per-trial training schedule (already shortened if desired).
inline SweepResult run_sweep(const Model& teacher, const Dataset& data, const SweepConfig& grid,
                             const TrainConfig& cfg,
                             const std::function<void(const std::string&)>& progress = {}) {
  SweepResult res;
  auto run = [&](const std::vector<SweepTrial>& trials) {
    std::vector<double> acc(trials.size());
    detail::ParallelFor(static_cast<int>(trials.size()), grid.workers, [&](int i) {
      acc[i] = run_sweep_trial(teacher, data, trials[i], cfg);
    });
    return acc;
  };
  auto note = [&](const SweepTrial& t, double acc) {
    if (!progress) return;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "width=%g temperature=%g beta=%g val_mpca=%.6f", t.width,
                  t.beta > 0.0 ? t.temperature : 0.0, t.beta, acc);
    progress(buf);
  };
  auto baseline_of = [&](double width) {
    for (const auto& b : res.baselines)
      if (b.width == width) return b.val_mpca;
    return 0.0;
  };

  // Stage 1: widths, with the no-KD baseline of each width.
  std::vector<SweepTrial> trials;
  for (double w : grid.widths) trials.push_back({w, 1.0, 0.0});
  for (double w : grid.widths) trials.push_back({w, grid.width_temperature, grid.width_beta});
  std::vector<double> acc = run(trials);
  const std::size_t nw = grid.widths.size();
  for (std::size_t i = 0; i < trials.size(); ++i) note(trials[i], acc[i]);
  for (std::size_t i = 0; i < nw; ++i) res.baselines.push_back({grid.widths[i], acc[i]});
  std::vector<double> stage(acc.begin() + nw, acc.end());
  for (std::size_t i = 0; i < nw; ++i) {
    res.rows.push_back({"width", grid.widths[i], grid.width_temperature, grid.width_beta,
                        stage[i], acc[i]});
  }
  res.best_width = grid.widths[detail::ArgMax(stage)];

  // Stage 2: temperatures at the best width.
  trials.clear();
  for (double t : grid.temperatures) trials.push_back({res.best_width, t, grid.width_beta});
  stage = run(trials);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    note(trials[i], stage[i]);
    res.rows.push_back({"temperature", res.best_width, trials[i].temperature, grid.width_beta,
                        stage[i], baseline_of(res.best_width)});
  }
  res.best_temperature = grid.temperatures[detail::ArgMax(stage)];

  // Stage 3: teacher weights at the best temperature.
  trials.clear();
  for (double b : grid.betas) trials.push_back({res.best_width, res.best_temperature, b});
  stage = run(trials);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    note(trials[i], stage[i]);
    res.rows.push_back({"beta", res.best_width, res.best_temperature, trials[i].beta, stage[i],
                        baseline_of(res.best_width)});
  }
  res.best_beta = grid.betas[detail::ArgMax(stage)];
  return res;
}

// Plain-text table, one row per configuration.
inline std::string format_sweep_table(const SweepResult& r) {
  std::string out = "width  T    beta  val_mpca  baseline\n";
  char buf[96];
  for (const SweepRow& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%-6g %-4g %-5g %8.2f  %8.2f\n", row.width, row.temperature,
                  row.beta, 100.0 * row.val_mpca, 100.0 * row.baseline_mpca);
    out += buf;
  }
  return out;
}

}  // namespace qdk

#endif  // QDK_CLI_SWEEP_HPP_

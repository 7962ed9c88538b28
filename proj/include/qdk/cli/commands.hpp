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

// The subcommands behind tools/qdk. Each takes a validated RunConfig and
// returns its JSON report; epoch logs go to `log`.

#ifndef QDK_CLI_COMMANDS_HPP_
#define QDK_CLI_COMMANDS_HPP_

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>
#include <string>
#include <type_traits>
#include <variant>

#include "json.hpp"
#include "qdk/cli/bench.hpp"
#include "qdk/cli/config.hpp"
#include "qdk/cli/sweep.hpp"
#include "qdk/data/dataset.hpp"
#include "qdk/data/idx.hpp"
#include "qdk/distill/train.hpp"
#include "qdk/io/model_io.hpp"
#include "qdk/metrics.hpp"
#include "qdk/nn/models.hpp"

namespace qdk {

using Json = nlohmann::ordered_json;

inline const char* command_name(Command c) {
  switch (c) {
    case Command::kTrainTeacher: return "train-teacher";
    case Command::kTrainStudent: return "train-student";
    case Command::kQatDistill: return "qat-distill";
    case Command::kQuantize: return "quantize";
    case Command::kEval: return "eval";
    case Command::kBench: return "bench";
    case Command::kSweep: return "sweep";
  }
  return "?";
}

inline Json to_json(const EvalReport& r) {
  Json j;
  j["num_classes"] = r.num_classes;
  j["samples"] = r.samples;
  j["mean_per_class_accuracy"] = r.mean_per_class_accuracy;
  j["accuracy"] = r.accuracy;
  j["per_class_accuracy"] = r.per_class_accuracy;
  j["confusion"] = r.confusion;
  return j;
}

inline Json to_json(const BenchResult& b) {
  Json j;
  j["warmup"] = b.warmup;
  j["iterations"] = b.iterations;
  j["threads"] = 1;
  j["mean_latency_ms"] = b.mean_ms;
  j["p50_latency_ms"] = b.p50_ms;
  j["p95_latency_ms"] = b.p95_ms;
  j["fps"] = b.fps;
  return j;
}

inline Json to_json(const SweepResult& s) {
  Json j;
  j["baselines"] = Json::array();
  for (const auto& b : s.baselines) j["baselines"].push_back({{"width", b.width}, {"val_mpca", b.val_mpca}});
  j["rows"] = Json::array();
  for (const auto& r : s.rows) {
    j["rows"].push_back({{"stage", r.stage},
                         {"width", r.width},
                         {"temperature", r.temperature},
                         {"beta", r.beta},
                         {"val_mpca", r.val_mpca},
                         {"baseline_mpca", r.baseline_mpca},
                         {"beats_baseline", r.beats_baseline()}});
  }
  j["best"] = {{"width", s.best_width}, {"temperature", s.best_temperature}, {"beta", s.best_beta}};
  return j;
}

inline Dataset make_dataset(const RunConfig& cfg) {
  const DataConfig& d = cfg.data;
  if (!d.train_images.empty()) {
    Dataset ds;
    ds.train = load_idx(d.train_images, d.train_labels, d.num_classes);
    ds.val = load_idx(d.val_images, d.val_labels, d.num_classes);
    ds.test = load_idx(d.test_images, d.test_labels, d.num_classes);
    return ds;
  }
  const std::vector<int> counts = d.counts.empty() ? default_class_counts(d.num_classes) : d.counts;
  DatasetOptions opt;
  opt.val_per_class = d.val_per_class;
  opt.test_per_class = d.test_per_class;
  return generate_shapes_dataset(d.num_classes, counts, cfg.data_seed(), opt);
}

inline const DatasetSplit& select_split(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "val") return ds.val;
  if (name == "test") return ds.test;
  throw ConfigError("unknown split '" + name + "'");
}

namespace detail {

// Epoch records go to the configured log file, or to `fallback`.
class EpochSink {
 public:
  EpochSink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
      if (!*file_) throw IoError("cannot open log file " + path);
      out_ = file_.get();
    }
  }

  EpochLogger logger() {
    return [this](const EpochRecord& r) { *out_ << r.ToLine() << '\n' << std::flush; };
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

inline void CheckDatasetClasses(int model_classes, const Dataset& ds) {
  if (ds.train.num_classes() != model_classes) {
    throw ConfigError("model has " + std::to_string(model_classes) + " classes but the dataset has " +
                      std::to_string(ds.train.num_classes()));
  }
}

template <typename M>
Json SavedModelReport(Command cmd, const M& model, const std::string& path, std::size_t bytes,
                      const Dataset& ds) {
  Json j;
  j["command"] = command_name(cmd);
  j["model_path"] = path;
  j["quantized"] = std::is_same_v<M, QuantizedModel>;
  j["family"] = to_string(model.meta.family);
  j["width_multiplier"] = model.meta.width_multiplier;
  j["size_bytes"] = bytes;
  j["val"] = to_json(evaluate(model, ds.val));
  j["test"] = to_json(evaluate(model, ds.test));
  return j;
}

}  // namespace detail

inline Json cmd_train_teacher(RunConfig cfg, std::ostream& log) {
  cfg.family = "teacher";
  const Dataset ds = make_dataset(cfg);
  const TrainConfig tc = cfg.train_config();
  detail::EpochSink sink(cfg.log, log);
  Model teacher = build_teacher(ds.train.num_classes(), tc.seed, tc.dropout_p);
  teacher = train_float(std::move(teacher), ds, tc, nullptr, KDConfig(), sink.logger());
  const std::size_t bytes = save_model(teacher, cfg.save);
  return detail::SavedModelReport(Command::kTrainTeacher, teacher, cfg.save, bytes, ds);
}

inline Json cmd_train_student(RunConfig cfg, std::ostream& log) {
  cfg.family = "student";
  const Dataset ds = make_dataset(cfg);
  const TrainConfig tc = cfg.train_config();
  detail::EpochSink sink(cfg.log, log);
  std::unique_ptr<Model> teacher;
  if (!cfg.teacher.empty()) {
    teacher = std::make_unique<Model>(load_float_model(cfg.teacher));
    detail::CheckDatasetClasses(teacher->meta.num_classes, ds);
  }
  Model student = build_student(ds.train.num_classes(), cfg.width, tc.seed, tc.dropout_p);
  student = train_float(std::move(student), ds, tc, teacher.get(),
                        teacher ? cfg.kd() : KDConfig(), sink.logger());
  const std::size_t bytes = save_model(student, cfg.save);
  Json j = detail::SavedModelReport(Command::kTrainStudent, student, cfg.save, bytes, ds);
  j["distilled"] = teacher != nullptr;
  return j;
}

inline Json cmd_qat_distill(RunConfig cfg, std::ostream& log) {
  cfg.family = "student";
  const Dataset ds = make_dataset(cfg);
  const TrainConfig tc = cfg.train_config();
  detail::EpochSink sink(cfg.log, log);
  const Model teacher = load_float_model(cfg.teacher);
  detail::CheckDatasetClasses(teacher.meta.num_classes, ds);
  Model student = cfg.model.empty()
                      ? build_student(ds.train.num_classes(), cfg.width, tc.seed, tc.dropout_p)
                      : load_float_model(cfg.model);
  detail::CheckDatasetClasses(student.meta.num_classes, ds);
  const QuantizedModel qm =
      quantized_distillation_train(teacher, student, ds, cfg.kd(), tc, sink.logger());
  const std::size_t bytes = save_model(qm, cfg.save);
  return detail::SavedModelReport(Command::kQatDistill, qm, cfg.save, bytes, ds);
}

inline Json cmd_quantize(const RunConfig& cfg) {
  const Dataset ds = make_dataset(cfg);
  const Model model = load_float_model(cfg.model);
  detail::CheckDatasetClasses(model.meta.num_classes, ds);
  const QuantizedModel qm = post_training_quantize(model, ds.train);
  const std::size_t bytes = save_model(qm, cfg.save);
  return detail::SavedModelReport(Command::kQuantize, qm, cfg.save, bytes, ds);
}

inline Json cmd_eval(const RunConfig& cfg) {
  const Dataset ds = make_dataset(cfg);
  const DatasetSplit& split = select_split(ds, cfg.data.split);
  const AnyModel model = load_model(cfg.model);
  Json j;
  j["command"] = "eval";
  j["model_path"] = cfg.model;
  j["quantized"] = std::holds_alternative<QuantizedModel>(model);
  j["split"] = cfg.data.split;
  const EvalReport r = std::visit(
      [&](const auto& m) {
        if (m.meta.num_classes != split.num_classes()) {
          throw ConfigError("model has " + std::to_string(m.meta.num_classes) +
                            " classes but the split has " + std::to_string(split.num_classes()));
        }
        return evaluate(m, split);
      },
      model);
  j.update(to_json(r));
  return j;
}

inline Json cmd_bench(const RunConfig& cfg) {
  const AnyModel model = load_model(cfg.model);
  const BenchResult b = bench_model(model, cfg.bench_warmup, cfg.bench_iterations, cfg.seed.value_or(0));
  Json j;
  j["command"] = "bench";
  j["model_path"] = cfg.model;
  j["quantized"] = std::holds_alternative<QuantizedModel>(model);
  j["size_bytes"] = std::filesystem::file_size(cfg.model);
  j.update(to_json(b));
  return j;
}

inline Json cmd_sweep(RunConfig cfg, std::ostream& log) {
  cfg.family = "student";
  const Dataset ds = make_dataset(cfg);
  const Model teacher = load_float_model(cfg.teacher);
  detail::CheckDatasetClasses(teacher.meta.num_classes, ds);
  const TrainConfig tc = cfg.train_config().Rescaled(cfg.sweep.epochs);
  const SweepResult res =
      run_sweep(teacher, ds, cfg.sweep, tc, [&](const std::string& line) { log << line << '\n'; });
  log << format_sweep_table(res);
  Json j;
  j["command"] = "sweep";
  j["epochs"] = cfg.sweep.epochs;
  j.update(to_json(res));
  return j;
}

inline Json run_command(Command cmd, const RunConfig& cfg, std::ostream& log = std::cerr) {
  validate_config(cfg, cmd);
  switch (cmd) {
    case Command::kTrainTeacher: return cmd_train_teacher(cfg, log);
    case Command::kTrainStudent: return cmd_train_student(cfg, log);
    case Command::kQatDistill: return cmd_qat_distill(cfg, log);
    case Command::kQuantize: return cmd_quantize(cfg);
    case Command::kEval: return cmd_eval(cfg);
    case Command::kBench: return cmd_bench(cfg);
    case Command::kSweep: return cmd_sweep(cfg, log);
  }
  throw ContractError("unknown command");
}

// Writes the report to `path`, or to stdout when empty.
inline void emit_report(const Json& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << report.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace qdk

#endif  // QDK_CLI_COMMANDS_HPP_

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

// Run configuration: a flat key = value file with [section] headers, plus
// `--key value` overrides. A key may be given as `section.key` or, when
// unambiguous, as the bare key.
//
//   seed = 7
//   [train]
//   epochs = 60
//   milestones = 21, 30, 45

#ifndef QDK_CLI_CONFIG_HPP_
#define QDK_CLI_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qdk/data/dataset.hpp"
#include "qdk/distill/kd.hpp"
#include "qdk/error.hpp"
#include "qdk/nn/optim.hpp"

namespace qdk {

struct DataConfig {
  int num_classes = 10;
  std::vector<int> counts;  // empty: default_class_counts(num_classes)
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  int val_per_class = 30;
  int test_per_class = 50;
  // IDX files replace the generated dataset when train_images is set.
  std::string train_images, train_labels, val_images, val_labels, test_images, test_labels;
  std::string split = "test";  // split used by eval
};

struct SweepConfig {
  int epochs = 15;
  std::vector<double> widths = {0.5, 1.0, 1.5};
  std::vector<double> temperatures = {1, 3, 7, 9};
  std::vector<double> betas = {0.5, 0.6, 0.8, 0.9, 1.0};
  // Fixed while the width is tuned; beta stays fixed while T is tuned.
  double width_temperature = 5.0;
  double width_beta = 0.7;
  int workers = 1;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  TrainConfig train;
  bool dropout_set = false;
  double kd_beta = 0.9;
  double kd_temperature = 3.0;
  bool kd_literal_hard_term = false;
  std::string family = "student";
  double width = 0.5;
  DataConfig data;
  SweepConfig sweep;
  int bench_iterations = 1000;
  int bench_warmup = 50;
  // Paths.
  std::string teacher, model, save, out, log;

  KDConfig kd() const { return KDConfig(kd_beta, kd_temperature, kd_literal_hard_term); }
  std::uint64_t data_seed() const { return data.seed.value_or(seed.value_or(0)); }

  // Training config with the seed and the family's dropout default applied.
  TrainConfig train_config() const {
    TrainConfig c = train;
    c.seed = seed.value_or(0);
    if (!dropout_set) c.dropout_p = family == "teacher" ? 0.5f : 0.2f;
    return c;
  }
};

namespace detail {

inline std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": cannot parse '" + v + "'");
  return out;
}

inline bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
std::vector<T> ParseList(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = v.find(',', start);
    const std::string item = Trim(std::string_view(v).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(ParseNumber<T>(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct KeySpec {
  const char* section;
  const char* name;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

template <typename T>
KeySpec Num(const char* section, const char* name, T RunConfig::*field) {
  return {section, name, [field](RunConfig& c, const std::string& k, const std::string& v) {
            c.*field = ParseNumber<T>(k, v);
          }};
}

inline KeySpec Str(const char* section, const char* name, std::string RunConfig::*field) {
  return {section, name,
          [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; }};
}

inline const std::vector<KeySpec>& Keys() {
  using C = RunConfig;
  auto data_str = [](const char* name, std::string DataConfig::*f) {
    return KeySpec{"data", name,
                   [f](C& c, const std::string&, const std::string& v) { c.data.*f = v; }};
  };
  static const std::vector<KeySpec> keys = {
      {"", "seed", [](C& c, const std::string& k, const std::string& v) {
         c.seed = ParseNumber<std::uint64_t>(k, v);
       }},
      Str("model", "family", &C::family),
      Num("model", "width", &C::width),
      {"train", "epochs", [](C& c, const std::string& k, const std::string& v) {
         c.train.epochs = ParseNumber<int>(k, v);
       }},
      {"train", "lr", [](C& c, const std::string& k, const std::string& v) {
         c.train.lr = ParseNumber<double>(k, v);
       }},
      {"train", "momentum", [](C& c, const std::string& k, const std::string& v) {
         c.train.momentum = ParseNumber<double>(k, v);
       }},
      {"train", "weight_decay", [](C& c, const std::string& k, const std::string& v) {
         c.train.weight_decay = ParseNumber<double>(k, v);
       }},
      {"train", "milestones", [](C& c, const std::string& k, const std::string& v) {
         c.train.milestones = ParseList<int>(k, v);
       }},
      {"train", "lr_gamma", [](C& c, const std::string& k, const std::string& v) {
         c.train.lr_gamma = ParseNumber<double>(k, v);
       }},
      {"train", "dropout_p", [](C& c, const std::string& k, const std::string& v) {
         c.train.dropout_p = ParseNumber<float>(k, v);
         c.dropout_set = true;
       }},
      {"train", "freeze_epoch", [](C& c, const std::string& k, const std::string& v) {
         c.train.freeze_epoch = ParseNumber<int>(k, v);
       }},
      {"train", "batch_size", [](C& c, const std::string& k, const std::string& v) {
         c.train.batch_size = ParseNumber<int>(k, v);
       }},
      Num("kd", "beta", &C::kd_beta),
      Num("kd", "temperature", &C::kd_temperature),
      {"kd", "literal_hard_term", [](C& c, const std::string& k, const std::string& v) {
         c.kd_literal_hard_term = ParseBool(k, v);
       }},
      {"data", "num_classes", [](C& c, const std::string& k, const std::string& v) {
         c.data.num_classes = ParseNumber<int>(k, v);
       }},
      {"data", "counts", [](C& c, const std::string& k, const std::string& v) {
         c.data.counts = ParseList<int>(k, v);
       }},
      {"data", "seed", [](C& c, const std::string& k, const std::string& v) {
         c.data.seed = ParseNumber<std::uint64_t>(k, v);
       }},
      {"data", "val_per_class", [](C& c, const std::string& k, const std::string& v) {
         c.data.val_per_class = ParseNumber<int>(k, v);
       }},
      {"data", "test_per_class", [](C& c, const std::string& k, const std::string& v) {
         c.data.test_per_class = ParseNumber<int>(k, v);
       }},
      data_str("train_images", &DataConfig::train_images),
      data_str("train_labels", &DataConfig::train_labels),
      data_str("val_images", &DataConfig::val_images),
      data_str("val_labels", &DataConfig::val_labels),
      data_str("test_images", &DataConfig::test_images),
      data_str("test_labels", &DataConfig::test_labels),
      data_str("split", &DataConfig::split),
      {"sweep", "epochs", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.epochs = ParseNumber<int>(k, v);
       }},
      {"sweep", "widths", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.widths = ParseList<double>(k, v);
       }},
      {"sweep", "temperatures", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.temperatures = ParseList<double>(k, v);
       }},
      {"sweep", "betas", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.betas = ParseList<double>(k, v);
       }},
      {"sweep", "width_temperature", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.width_temperature = ParseNumber<double>(k, v);
       }},
      {"sweep", "width_beta", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.width_beta = ParseNumber<double>(k, v);
       }},
      {"sweep", "workers", [](C& c, const std::string& k, const std::string& v) {
         c.sweep.workers = ParseNumber<int>(k, v);
       }},
      Num("bench", "iterations", &C::bench_iterations),
      Num("bench", "warmup", &C::bench_warmup),
      Str("paths", "teacher", &C::teacher),
      Str("paths", "model", &C::model),
      Str("paths", "save", &C::save),
      Str("paths", "out", &C::out),
      Str("paths", "log", &C::log),
  };
  return keys;
}

// Resolves `section.key` or a bare key. Throws ConfigError on unknown or
// ambiguous names.
inline const KeySpec& FindKey(std::string_view section, std::string_view name) {
  const KeySpec* hit = nullptr;
  int matches = 0;
  for (const KeySpec& k : Keys()) {
    if (name != k.name) continue;
    if (section == k.section) return k;
    ++matches;
    hit = &k;
  }
  if (!section.empty() || matches == 0) {
    const std::string full = section.empty() ? std::string(name)
                                             : std::string(section) + "." + std::string(name);
    throw ConfigError("unknown key '" + full + "'");
  }
  if (matches > 1) {
    throw ConfigError("key '" + std::string(name) + "' is ambiguous; qualify it with a section");
  }
  return *hit;
}

}  // namespace detail

// Applies one `key = value` assignment; `key` may be section-qualified.
inline void set_config_value(RunConfig& cfg, std::string_view key, const std::string& value) {
  const auto dot = key.find('.');
  std::string_view section, name = key;
  if (dot != std::string_view::npos) {
    section = key.substr(0, dot);
    name = key.substr(dot + 1);
  }
  const detail::KeySpec& spec = detail::FindKey(section, name);
  const std::string full =
      std::string(spec.section).empty() ? spec.name : std::string(spec.section) + "." + spec.name;
  spec.set(cfg, full, value);
}

inline void parse_config_text(RunConfig& cfg, std::string_view text, const std::string& origin) {
  std::string section;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string line(text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                     : nl - start));
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::Trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = detail::Trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = detail::Trim(std::string_view(line).substr(0, eq));
    std::string value = detail::Trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    try {
      const detail::KeySpec& spec = detail::FindKey(section, key);
      spec.set(cfg, section.empty() ? key : section + "." + key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  parse_config_text(cfg, text, path);
}

// Applies `--key value` pairs in order.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) {
      throw ConfigError("unexpected argument '" + a + "'; overrides look like --key value");
    }
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("missing value for --" + key);
      value = args[++i];
    }
    set_config_value(cfg, key, value);
  }
}

enum class Command { kTrainTeacher, kTrainStudent, kQatDistill, kQuantize, kEval, kBench, kSweep };

namespace detail {

inline void RequireFile(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError(key + " is required");
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError(key + ": no such file '" + path + "'");
  }
}

inline void RequireWritable(const std::string& key, const std::string& path, bool required) {
  if (path.empty()) {
    if (required) throw ConfigError(key + " is required");
    return;
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw ConfigError(key + ": directory '" + parent.string() + "' does not exist");
  }
}

}  // namespace detail

// Checks the invariants every command relies on, including that input
// paths exist.
inline void validate_config(const RunConfig& cfg, Command cmd) {
  if (!cfg.seed) throw ConfigError("seed is required");
  cfg.train_config().Validate();
  if (cfg.train.freeze_epoch < 0) throw ConfigError("freeze_epoch must be >= 0");
  cfg.kd();  // validates beta and temperature
  if (cfg.family != "teacher" && cfg.family != "student") {
    throw ConfigError("model.family must be 'teacher' or 'student'");
  }
  if (!(cfg.width > 0.0)) throw ConfigError("model.width must be > 0");
  if (cfg.data.split != "train" && cfg.data.split != "val" && cfg.data.split != "test") {
    throw ConfigError("data.split must be train, val or test");
  }
  if (cfg.bench_iterations < 1 || cfg.bench_warmup < 0) {
    throw ConfigError("bench.iterations must be >= 1 and bench.warmup >= 0");
  }
  if (cfg.sweep.epochs < 1 || cfg.sweep.workers < 1 || cfg.sweep.widths.empty() ||
      cfg.sweep.temperatures.empty() || cfg.sweep.betas.empty()) {
    throw ConfigError("sweep needs epochs >= 1, workers >= 1 and non-empty grids");
  }
  const DataConfig& d = cfg.data;
  if (!d.train_images.empty()) {
    detail::RequireFile("data.train_images", d.train_images);
    detail::RequireFile("data.train_labels", d.train_labels);
    detail::RequireFile("data.val_images", d.val_images);
    detail::RequireFile("data.val_labels", d.val_labels);
    detail::RequireFile("data.test_images", d.test_images);
    detail::RequireFile("data.test_labels", d.test_labels);
  }
  detail::RequireWritable("paths.out", cfg.out, false);
  detail::RequireWritable("paths.log", cfg.log, false);
  switch (cmd) {
    case Command::kTrainTeacher:
      detail::RequireWritable("paths.save", cfg.save, true);
      break;
    case Command::kTrainStudent:
      if (!cfg.teacher.empty()) detail::RequireFile("paths.teacher", cfg.teacher);
      detail::RequireWritable("paths.save", cfg.save, true);
      break;
    case Command::kQatDistill:
      detail::RequireFile("paths.teacher", cfg.teacher);
      detail::RequireWritable("paths.save", cfg.save, true);
      break;
    case Command::kQuantize:
      detail::RequireFile("paths.model", cfg.model);
      detail::RequireWritable("paths.save", cfg.save, true);
      break;
    case Command::kEval:
    case Command::kBench:
      detail::RequireFile("paths.model", cfg.model);
      break;
    case Command::kSweep:
      detail::RequireFile("paths.teacher", cfg.teacher);
      break;
  }
}

}  // namespace qdk

#endif  // QDK_CLI_CONFIG_HPP_

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


// qdk: train, distill, quantize, evaluate and benchmark models.
//
//   qdk <command> [--config FILE] [--key value ...]
//
// Reports are JSON on stdout (or --out FILE). Failures print one line
// "error: <class>: <message>" on stderr and exit nonzero.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qdk/cli/commands.hpp"

namespace {

struct Sub {
  Sub(qdk::Command c, const char* h) : command(c), help(h) {}

  qdk::Command command;
  const char* help;
  CLI::App* app = nullptr;
  std::string config;
  std::string kd;
};

int Fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << "error: " << kind << ": " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Quantized knowledge distillation toolkit");
  app.require_subcommand(1);
  std::vector<Sub> subs = {
      {qdk::Command::kTrainTeacher, "Train the float teacher"},
      {qdk::Command::kTrainStudent, "Train a float student, distilled with --kd TEACHER"},
      {qdk::Command::kQatDistill, "Quantization-aware distillation into an integer student"},
      {qdk::Command::kQuantize, "Post-training quantization of a float model"},
      {qdk::Command::kEval, "Mean per-class accuracy and confusion counts"},
      {qdk::Command::kBench, "Single-thread batch-1 latency and file size"},
      {qdk::Command::kSweep, "Sequential width / temperature / beta sweep"},
  };
  for (Sub& s : subs) {
    s.app = app.add_subcommand(qdk::command_name(s.command), s.help);
    s.app->add_option("--config", s.config, "key = value config file");
    if (s.command == qdk::Command::kTrainStudent) {
      s.app->add_option("--kd", s.kd, "teacher model to distill from");
    }
    s.app->allow_extras();
    s.app->footer("Any config key can be overridden with --key value or --section.key value.");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Fail("usage_error", e.what(), 2);
  }

  for (Sub& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      qdk::RunConfig cfg;
      if (!s.config.empty()) qdk::load_config_file(cfg, s.config);
      qdk::apply_overrides(cfg, s.app->remaining());
      if (!s.kd.empty()) cfg.teacher = s.kd;
      const qdk::Json report = qdk::run_command(s.command, cfg, std::cerr);
      qdk::emit_report(report, cfg.out);
      return 0;
    } catch (const qdk::Error& e) {
      return Fail(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
      return Fail("internal_error", e.what(), 1);
    }
  }
  return Fail("usage_error", "no command given", 2);
}

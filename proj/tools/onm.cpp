// Copyright 2026 The onmanifold Authors
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

// onm: command-line entry point.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "onm/cli/commands.hpp"
#include "onm/cli/config.hpp"
#include "onm/errors.hpp"
#include "onm/version.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(onm::ErrorKind kind) {
  switch (kind) {
    case onm::ErrorKind::kConfig:
    case onm::ErrorKind::kInput:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace onm::cli;

  CLI::App app{"On-manifold exploration toolkit"};
  app.set_version_flag("--version", std::string(onm::kVersion));
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "Experiment config (JSON); defaults to $ONM_CONFIG");
  app.add_option("--set", overrides, "Config override, e.g. training.seed=3 (repeatable)");

  DemoGenOptions demo;
  auto* demo_cmd = app.add_subcommand("demo-gen", "Generate scripted expert demonstrations");
  demo_cmd->add_option("-n,--n", demo.n, "Number of demonstrations");
  demo_cmd->add_option("--seed", demo.seed, "Demo seed");
  demo_cmd->add_option("-o,--out", demo.out, "Output JSONL file");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train the policy (and plug-in)");
  train_cmd->add_option("-d,--dataset", train.dataset, "Training dataset (JSONL)");
  train_cmd->add_option("-o,--out", train.out, "Output checkpoint");
  train_cmd->add_option("-i,--iterations", train.iterations, "Training iterations");
  train_cmd->add_flag("--no-vib", train.no_vib, "Train the base path only");
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint");
  std::optional<std::string> loss_log;
  train_cmd->add_option("--log", loss_log, "Loss log file (JSONL); '-' for stderr");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out starts");
  eval_cmd->add_option("-k,--checkpoint", eval.checkpoint, "Checkpoint");
  eval_cmd->add_option("-m,--mode", eval.mode, "base | explore | cond-noise | expert")
      ->check(CLI::IsMember({"base", "explore", "cond-noise", "expert"}));
  eval_cmd->add_option("-a,--alpha", eval.alpha, "Exploration scale");
  eval_cmd->add_option("--starts", eval.starts, "Held-out start states");
  eval_cmd->add_option("--attempts", eval.attempts, "Attempts per start");

  SnrOptions snr;
  auto* snr_cmd = app.add_subcommand("snr-report", "Per-dimension latent SNR over a dataset");
  snr_cmd->add_option("-k,--checkpoint", snr.checkpoint, "Checkpoint");
  snr_cmd->add_option("-d,--dataset", snr.dataset, "Dataset (JSONL)");
  snr_cmd->add_option("-o,--out", snr.out, "Output report (default <checkpoint>.snr.json)");
  snr_cmd->add_option("-t,--threshold", snr.threshold_db, "Effective-dimension threshold in dB");

  ImproveOptions imp;
  auto* imp_cmd = app.add_subcommand("improve", "Run self-improvement rounds");
  imp_cmd->add_option("-k,--checkpoint", imp.checkpoint, "Starting checkpoint");
  imp_cmd->add_option("-d,--dataset", imp.dataset, "Starting dataset (JSONL)");
  imp_cmd->add_option("-r,--rounds", imp.rounds, "Number of rounds");
  imp_cmd->add_option("-m,--mode", imp.mode, "Explorer: explore | cond-noise | base")
      ->check(CLI::IsMember({"base", "explore", "cond-noise"}));
  imp_cmd->add_option("-a,--alpha", imp.alpha, "Exploration scale");
  imp_cmd->add_option("-o,--out-dir", imp.out_dir, "Directory for round artifacts");

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the steering API and UI");
  serve_cmd->add_option("-k,--checkpoint", serve.checkpoint, "Checkpoint");
  serve_cmd->add_option("--checkpoint-id", serve.checkpoint_id, "Id sessions use for it");
  serve_cmd->add_option("--snr", serve.snr, "SNR report (default <checkpoint>.snr.json)");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("-p,--port", serve.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--ui-dir", serve.ui_dir, "UI bundle directory");
  serve_cmd->add_option("--record", serve.record, "JSONL file for finished steered episodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    auto [doc, used] = load_config_document(config_path ? std::optional<std::filesystem::path>(*config_path)
                                                         : std::nullopt);
    for (const auto& o : overrides) apply_override(doc, o);
    const ExperimentConfig cfg = config_from_json(doc);

    nlohmann::json out;
    if (*demo_cmd) {
      out = cmd_demo_gen(cfg, demo);
    } else if (*train_cmd) {
      std::ofstream log_file;
      std::ostream* log = nullptr;
      if (loss_log && *loss_log == "-") {
        log = &std::cerr;
      } else if (loss_log) {
        log_file.open(*loss_log);
        if (!log_file) throw onm::Error(onm::ErrorKind::kIo, "cannot write " + *loss_log);
        log = &log_file;
      }
      out = cmd_train(cfg, train, log);
    } else if (*eval_cmd) {
      out = cmd_eval(cfg, eval);
    } else if (*snr_cmd) {
      out = cmd_snr_report(cfg, snr);
    } else if (*imp_cmd) {
      out = cmd_improve(cfg, imp, &std::cerr);
    } else if (*serve_cmd) {
      return cmd_serve(cfg, serve, [&](int port) {
        std::cerr << "listening on http://" << serve.host << ":" << port << std::endl;
      });
    }
    if (used) out["config_file"] = used->string();
    std::cout << out.dump(2) << std::endl;
    return 0;
  } catch (const onm::Error& e) {
    std::cerr << "error (" << onm::to_string(e.kind()) << "): " << e.what() << std::endl;
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
}

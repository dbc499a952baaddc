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

#ifndef ONM_CLI_COMMANDS_HPP_
#define ONM_CLI_COMMANDS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"

#include "onm/cli/config.hpp"

namespace onm::cli {

/// Every command returns a JSON summary that echoes the resolved config.

struct DemoGenOptions {
  std::optional<int> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};
nlohmann::json cmd_demo_gen(const ExperimentConfig& cfg, const DemoGenOptions& o);

struct TrainOptions {
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::optional<int> iterations;
  bool no_vib = false;
  std::optional<std::string> resume;  // checkpoint to continue from
};
/// `log` receives one JSON line per loss-log entry when non-null.
nlohmann::json cmd_train(const ExperimentConfig& cfg, const TrainOptions& o, std::ostream* log = nullptr);

struct EvalOptions {
  std::optional<std::string> checkpoint;
  std::string mode = "base";  // base | explore | cond-noise | expert
  std::optional<double> alpha;
  std::optional<int> starts;
  std::optional<int> attempts;
};
nlohmann::json cmd_eval(const ExperimentConfig& cfg, const EvalOptions& o);

struct SnrOptions {
  std::optional<std::string> checkpoint;
  std::optional<std::string> dataset;
  std::optional<std::string> out;  // defaults to "<checkpoint>.snr.json"
  std::optional<double> threshold_db;
};
nlohmann::json cmd_snr_report(const ExperimentConfig& cfg, const SnrOptions& o);

struct ImproveOptions {
  std::optional<std::string> checkpoint;
  std::optional<std::string> dataset;
  std::optional<int> rounds;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  std::optional<std::string> out_dir;  // defaults to paths.reports
};
/// `progress` receives one JSON line per finished round when non-null.
nlohmann::json cmd_improve(const ExperimentConfig& cfg, const ImproveOptions& o,
                           std::ostream* progress = nullptr);

struct ServeOptions {
  std::optional<std::string> checkpoint;
  std::string checkpoint_id = "default";
  std::optional<std::string> snr;  // defaults to "<checkpoint>.snr.json" when present
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> ui_dir;
  std::optional<std::string> record;  // defaults to "<reports>/steered.jsonl"
};
/// Blocks until the server stops. `on_ready` runs once the port is bound.
int cmd_serve(const ExperimentConfig& cfg, const ServeOptions& o,
              const std::function<void(int port)>& on_ready = {});

std::string default_snr_path(const std::string& checkpoint);

}  // namespace onm::cli

#endif  // ONM_CLI_COMMANDS_HPP_

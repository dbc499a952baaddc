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

#ifndef ONM_CLI_CONFIG_HPP_
#define ONM_CLI_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "onm/env/planar.hpp"
#include "onm/improve/rounds.hpp"
#include "onm/policy/diffusion_policy.hpp"
#include "onm/vib/model.hpp"
#include "onm/vib/plugin.hpp"

namespace onm::cli {

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "ONM_CONFIG";

struct DemoSettings {
  int count = 10;
  std::uint64_t seed = 0;
};

struct EvalSettings {
  int starts = 20;
  int attempts = 5;
};

struct Paths {
  std::string dataset = "data/demos.jsonl";
  std::string checkpoint = "runs/model.ckpt.json";
  std::string reports = "runs/reports";
};

struct ExperimentConfig {
  env::EnvConfig env = env::EnvConfig::reach();
  policy::PolicyConfig policy;
  vib::VibConfig vib;
  vib::TrainingConfig training;
  DemoSettings demos;
  EvalSettings eval;
  std::vector<improve::RoundPlan> improve{improve::RoundPlan{}};
  Paths paths;

  ExperimentConfig();
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);

/// Sections overlay the defaults; policy defaults follow the environment.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Reads `explicit_path`, else $ONM_CONFIG, else returns the defaults.
/// Also returns the path that was used, if any.
std::pair<nlohmann::json, std::optional<std::filesystem::path>> load_config_document(
    const std::optional<std::filesystem::path>& explicit_path);

/// Applies "section.key=value" (value parsed as JSON, falling back to a
/// plain string) to a config document.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace onm::cli

#endif  // ONM_CLI_CONFIG_HPP_

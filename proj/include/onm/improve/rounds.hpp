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

#ifndef ONM_IMPROVE_ROUNDS_HPP_
#define ONM_IMPROVE_ROUNDS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "onm/env/dataset.hpp"
#include "onm/improve/rollouts.hpp"
#include "onm/vib/model.hpp"

namespace onm::improve {

struct RoundPlan {
  int starts = 20;
  int attempts = 5;
  double alpha = 2.0;
  int budget = 0;  // 0 means starts * attempts
  int cap = 20;    // max successful rollouts merged per round; 0 = unlimited
  int retrain_iterations = 0;  // 0 means the base-training iteration count
  std::uint64_t seed = 0;
  vib::ActMode mode = vib::ActMode::kExplore;
  bool from_scratch = false;
  int eval_episodes = 100;

  void validate() const;
};

void to_json(nlohmann::json& j, const RoundPlan& p);
void from_json(const nlohmann::json& j, RoundPlan& p);

/// Settings shared by every round.
struct RoundContext {
  env::EnvConfig env;
  vib::TrainingConfig training;  // base-training settings; iterations sets the retrain default
  double threshold_db = 0.0;
};

struct ImprovementRoundReport {
  int round = 0;
  double success_before = 0.0;
  double success_after = 0.0;
  std::optional<double> pass_at_5;
  double average_jerk = 0.0;
  int rollouts_used = 0;
  int budget = 0;
  int successes_collected = 0;
  int successes_kept = 0;
  std::size_t dataset_records = 0;
  nlohmann::json snr = nullptr;
  std::optional<double> relative_improvement;
  bool zero_success_warning = false;
  bool retrained = false;
  std::string mode;
  double alpha = 0.0;
};

void to_json(nlohmann::json& j, const ImprovementRoundReport& r);

/// (after - before) / before; undefined when before is 0.
std::optional<double> relative_improvement(double before, double after);

struct RoundResult {
  vib::Model model;
  ImprovementRoundReport report;
  std::vector<env::TrajectoryRecord> dataset;  // aggregated dataset after this round
  RolloutBatch rollouts;
};

/// evaluate -> explore/collect -> filter -> aggregate -> retrain -> evaluate.
///
/// Retraining fine-tunes a copy of `model` with fresh optimizer state unless
/// the plan asks for a from-scratch model. A round that collects no success
/// keeps the dataset and model unchanged and sets zero_success_warning.
/// `before` skips the first evaluation when the caller already has it.
RoundResult run_round(const vib::Model& model, const std::vector<env::TrajectoryRecord>& dataset,
                      const RoundPlan& plan, const RoundContext& ctx, int round_index = 1,
                      std::optional<double> before = std::nullopt);

/// Chains run_round; round r starts from round r - 1's model and dataset.
std::vector<RoundResult> run_rounds(const vib::Model& model,
                                    const std::vector<env::TrajectoryRecord>& dataset,
                                    const std::vector<RoundPlan>& plans, const RoundContext& ctx);

/// Exploration start seeds for a given round.
RolloutPlan rollout_plan_for(const RoundPlan& plan, int round_index);

}  // namespace onm::improve

#endif  // ONM_IMPROVE_ROUNDS_HPP_

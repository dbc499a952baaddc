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

#ifndef ONM_IMPROVE_ROLLOUTS_HPP_
#define ONM_IMPROVE_ROLLOUTS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"

#include "onm/env/dataset.hpp"
#include "onm/vib/model.hpp"

namespace onm::improve {

/// Env seed blocks. Demonstrations use seed * 100000 + i, so the blocks stay
/// disjoint for demo seeds below 50.
inline constexpr std::uint64_t kExploreSeedBase = 5'000'000;
inline constexpr std::uint64_t kEvalSeedBase = 9'000'000;

/// Produces the next chunk for an episode: (state, observation, chunk index).
using ChunkSource =
    std::function<policy::ActionChunk(const env::EnvState&, const Eigen::VectorXd&, int)>;

/// Runs one episode from `seed`, re-planning a chunk every H steps.
env::TrajectoryRecord run_episode(const env::EnvConfig& cfg, std::uint64_t seed,
                                  const ChunkSource& source, env::Source tag, int round);

/// Model-driven chunk source. The DDIM start noise is keyed by (episode seed,
/// chunk index); exploration draws come from `explore_rng`, one per chunk.
ChunkSource model_source(const vib::Model& model, std::uint64_t episode_seed, vib::ActMode mode,
                         double alpha, nn::RngStream& explore_rng);

/// Scripted-expert chunk source (oracle controller).
ChunkSource expert_source(const env::EnvConfig& cfg, int horizon);

/// Throws a config error when the checkpoint was trained for another env.
void check_compatible(const vib::Model& model, const env::EnvConfig& cfg);

struct RolloutPlan {
  int starts = 20;
  int attempts = 5;
  double alpha = 2.0;
  int budget = 0;  // max episodes; 0 means starts * attempts
  std::uint64_t seed_base = kExploreSeedBase;
  int round = 0;

  int effective_budget() const { return budget > 0 ? budget : starts * attempts; }
  std::uint64_t start_seed(int i) const { return seed_base + static_cast<std::uint64_t>(i); }
};

struct RolloutBatch {
  std::vector<env::TrajectoryRecord> records;    // execution order
  std::vector<std::vector<bool>> outcomes;      // per start, per attempt
  int rollouts_used = 0;

  /// Pass@k over starts with at least k attempts; nullopt when none.
  std::optional<double> pass_at(int k) const;
  double success_rate() const;
  /// Mean per-episode average jerk (episodes shorter than 4 positions skipped).
  double mean_jerk(double dt) const;
};

/// Episodes are scheduled attempt-major (every start gets attempt a before
/// any start gets a + 1) until the budget is exhausted. Attempt a from start
/// s draws exploration noise from stream ("explore", s, a).
RolloutBatch collect_rollouts(const vib::Model& model, const env::EnvConfig& cfg,
                              const RolloutPlan& plan, vib::ActMode mode);

/// Same schedule with the scripted expert in control.
RolloutBatch collect_expert_rollouts(const env::EnvConfig& cfg, const RolloutPlan& plan, int horizon);

struct EvalMetrics {
  double success_rate = 0.0;
  std::optional<double> pass_at_5;
  double average_jerk = 0.0;
  int episodes = 0;
  int starts = 0;
  int attempts = 0;
};

void to_json(nlohmann::json& j, const EvalMetrics& m);
EvalMetrics summarize(const RolloutBatch& batch, const env::EnvConfig& cfg, int starts, int attempts);

/// Held-out evaluation on the kEvalSeedBase block.
EvalMetrics evaluate(const vib::Model& model, const env::EnvConfig& cfg, int starts, int attempts,
                     vib::ActMode mode, double alpha);

/// Keeps the successful records.
std::vector<env::TrajectoryRecord> filter_successes(const std::vector<env::TrajectoryRecord>& records);

/// expert followed by the first min(cap, |collected|) collected records; cap 0
/// keeps all.
std::vector<env::TrajectoryRecord> aggregate_dataset(const std::vector<env::TrajectoryRecord>& expert,
                                                     const std::vector<env::TrajectoryRecord>& collected,
                                                     int cap);

}  // namespace onm::improve

#endif  // ONM_IMPROVE_ROLLOUTS_HPP_

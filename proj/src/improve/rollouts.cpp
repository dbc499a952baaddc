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

#include "onm/improve/rollouts.hpp"

#include <algorithm>

#include "onm/analysis/metrics.hpp"
#include "onm/errors.hpp"

namespace onm::improve {

using nlohmann::json;

env::TrajectoryRecord run_episode(const env::EnvConfig& cfg, std::uint64_t seed,
                                  const ChunkSource& source, env::Source tag, int round) {
  env::StepResult cur = env::reset(cfg, seed);
  env::EpisodeRecorder rec(cfg, cur, tag, round);
  for (int chunk_index = 0; !cur.done; ++chunk_index) {
    const policy::ActionChunk chunk = source(cur.state, cur.observation, chunk_index);
    require(chunk.rows() >= 1 && chunk.cols() == 2, ErrorKind::kShape, "chunk must be H x 2");
    for (Eigen::Index t = 0; t < chunk.rows() && !cur.done; ++t) {
      const Eigen::Vector2d a = env::clip_action(cfg, chunk.row(t).transpose());
      env::StepResult next = env::step(cfg, cur.state, a);
      rec.record(cur.observation, a, next.state);
      cur = std::move(next);
    }
  }
  return std::move(rec).finish(cur.success);
}

ChunkSource model_source(const vib::Model& model, std::uint64_t episode_seed, vib::ActMode mode,
                         double alpha, nn::RngStream& explore_rng) {
  return [&model, episode_seed, mode, alpha, &explore_rng](const env::EnvState&,
                                                           const Eigen::VectorXd& obs, int chunk) {
    return vib::act(model, obs, mode, alpha, explore_rng, vib::sampler_noise(model, episode_seed, chunk))
        .actions;
  };
}

ChunkSource expert_source(const env::EnvConfig& cfg, int horizon) {
  return [cfg, horizon](const env::EnvState& s, const Eigen::VectorXd&, int) {
    return env::scripted_expert(cfg, s, horizon);
  };
}

void check_compatible(const vib::Model& model, const env::EnvConfig& cfg) {
  if (!model.env_name.empty() && model.env_name != cfg.name)
    fail(ErrorKind::kConfig, "checkpoint was trained on '" + model.env_name +
                                 "' but the environment is '" + cfg.name + "'");
  if (model.policy.config().obs_dim != cfg.obs_dim())
    fail(ErrorKind::kConfig, "checkpoint observation width does not match the environment");
}

std::optional<double> RolloutBatch::pass_at(int k) const {
  std::vector<std::vector<bool>> complete;
  for (const auto& o : outcomes)
    if (static_cast<int>(o.size()) >= k) complete.push_back(o);
  if (complete.empty()) return std::nullopt;
  return analysis::pass_at_k(complete, k);
}

double RolloutBatch::success_rate() const {
  if (records.empty()) return 0.0;
  const auto hits = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.success; });
  return double(hits) / double(records.size());
}

double RolloutBatch::mean_jerk(double dt) const {
  double total = 0.0;
  int n = 0;
  for (const auto& r : records) {
    if (r.positions.rows() < 4) continue;
    total += analysis::average_jerk(r.positions, dt);
    ++n;
  }
  return n > 0 ? total / n : 0.0;
}

namespace {

template <typename MakeSource>
RolloutBatch run_schedule(const env::EnvConfig& cfg, const RolloutPlan& plan, env::Source tag,
                          MakeSource&& make_source) {
  require(plan.starts >= 1 && plan.attempts >= 1, ErrorKind::kConfig,
          "rollout plan needs starts >= 1 and attempts >= 1");
  require(plan.effective_budget() >= plan.starts, ErrorKind::kConfig,
          "rollout budget must cover every start at least once");
  RolloutBatch out;
  out.outcomes.resize(plan.starts);
  const int budget = plan.effective_budget();
  for (int a = 0; a < plan.attempts && out.rollouts_used < budget; ++a) {
    for (int s = 0; s < plan.starts && out.rollouts_used < budget; ++s) {
      const std::uint64_t seed = plan.start_seed(s);
      nn::RngStream explore_rng(seed, "explore", static_cast<std::uint64_t>(a));
      auto rec = run_episode(cfg, seed, make_source(seed, explore_rng), tag, plan.round);
      out.outcomes[s].push_back(rec.success);
      out.records.push_back(std::move(rec));
      ++out.rollouts_used;
    }
  }
  return out;
}

}  // namespace

RolloutBatch collect_rollouts(const vib::Model& model, const env::EnvConfig& cfg,
                              const RolloutPlan& plan, vib::ActMode mode) {
  check_compatible(model, cfg);
  require(plan.alpha >= 0.0, ErrorKind::kConfig, "rollout alpha must be >= 0");
  return run_schedule(cfg, plan, env::Source::kRollout,
                      [&](std::uint64_t seed, nn::RngStream& rng) {
                        return model_source(model, seed, mode, plan.alpha, rng);
                      });
}

RolloutBatch collect_expert_rollouts(const env::EnvConfig& cfg, const RolloutPlan& plan, int horizon) {
  return run_schedule(cfg, plan, env::Source::kRollout,
                      [&](std::uint64_t, nn::RngStream&) { return expert_source(cfg, horizon); });
}

void to_json(json& j, const EvalMetrics& m) {
  j = json{{"success_rate", m.success_rate},
           {"pass_at_5", m.pass_at_5 ? json(*m.pass_at_5) : json(nullptr)},
           {"average_jerk", m.average_jerk},
           {"episodes", m.episodes},
           {"starts", m.starts},
           {"attempts", m.attempts}};
}

EvalMetrics summarize(const RolloutBatch& batch, const env::EnvConfig& cfg, int starts, int attempts) {
  EvalMetrics m;
  m.success_rate = batch.success_rate();
  m.pass_at_5 = batch.pass_at(5);
  m.average_jerk = batch.mean_jerk(cfg.dt());
  m.episodes = batch.rollouts_used;
  m.starts = starts;
  m.attempts = attempts;
  return m;
}

EvalMetrics evaluate(const vib::Model& model, const env::EnvConfig& cfg, int starts, int attempts,
                     vib::ActMode mode, double alpha) {
  RolloutPlan plan;
  plan.starts = starts;
  plan.attempts = attempts;
  plan.alpha = alpha;
  plan.seed_base = kEvalSeedBase;
  return summarize(collect_rollouts(model, cfg, plan, mode), cfg, starts, attempts);
}

std::vector<env::TrajectoryRecord> filter_successes(const std::vector<env::TrajectoryRecord>& records) {
  std::vector<env::TrajectoryRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const auto& r) { return r.success; });
  return out;
}

std::vector<env::TrajectoryRecord> aggregate_dataset(const std::vector<env::TrajectoryRecord>& expert,
                                                     const std::vector<env::TrajectoryRecord>& collected,
                                                     int cap) {
  require(cap >= 0, ErrorKind::kConfig, "aggregation cap must be >= 0");
  std::vector<env::TrajectoryRecord> out = expert;
  const std::size_t keep =
      cap == 0 ? collected.size() : std::min<std::size_t>(collected.size(), static_cast<std::size_t>(cap));
  out.insert(out.end(), collected.begin(), collected.begin() + static_cast<std::ptrdiff_t>(keep));
  return out;
}

}  // namespace onm::improve

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

#include "onm/improve/rounds.hpp"

#include <algorithm>

#include "onm/analysis/metrics.hpp"
#include "onm/errors.hpp"
#include "onm/improve/pipeline.hpp"
#include "onm/json_fields.hpp"

namespace onm::improve {

using nlohmann::json;

void RoundPlan::validate() const {
  require(starts >= 1, ErrorKind::kConfig, "improve.starts must be >= 1");
  require(attempts >= 1, ErrorKind::kConfig, "improve.attempts must be >= 1");
  require(starts <= 1000, ErrorKind::kConfig, "improve.starts must be <= 1000");
  require(budget == 0 || budget >= starts, ErrorKind::kConfig,
          "improve.budget must be 0 (unlimited) or at least improve.starts");
  require(cap >= 0, ErrorKind::kConfig, "improve.cap must be >= 0");
  require(retrain_iterations >= 0, ErrorKind::kConfig, "improve.retrain_iterations must be >= 0");
  require(eval_episodes >= 1, ErrorKind::kConfig, "improve.eval_episodes must be >= 1");
  require(alpha >= 0.0, ErrorKind::kConfig, "improve.alpha must be >= 0");
}

void to_json(json& j, const RoundPlan& p) {
  j = json{{"starts", p.starts},
           {"attempts", p.attempts},
           {"alpha", p.alpha},
           {"budget", p.budget},
           {"cap", p.cap},
           {"retrain_iterations", p.retrain_iterations},
           {"seed", p.seed},
           {"mode", vib::to_string(p.mode)},
           {"from_scratch", p.from_scratch},
           {"eval_episodes", p.eval_episodes}};
}

void from_json(const json& j, RoundPlan& p) {
  const RoundPlan d;
  const std::string pre = "improve";
  p.starts = read_field(j, "starts", pre, d.starts);
  p.attempts = read_field(j, "attempts", pre, d.attempts);
  p.alpha = read_field(j, "alpha", pre, d.alpha);
  p.budget = read_field(j, "budget", pre, d.budget);
  p.cap = read_field(j, "cap", pre, d.cap);
  p.retrain_iterations = read_field(j, "retrain_iterations", pre, d.retrain_iterations);
  p.seed = read_field(j, "seed", pre, d.seed);
  p.mode = vib::parse_act_mode(read_field(j, "mode", pre, vib::to_string(d.mode)));
  p.from_scratch = read_field(j, "from_scratch", pre, d.from_scratch);
  p.eval_episodes = read_field(j, "eval_episodes", pre, d.eval_episodes);
  p.validate();
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void to_json(json& j, const ImprovementRoundReport& r) {
  j = json{{"round", r.round},
           {"success_before", r.success_before},
           {"success_after", r.success_after},
           {"pass_at_5", optional_number(r.pass_at_5)},
           {"average_jerk", r.average_jerk},
           {"rollouts_used", r.rollouts_used},
           {"budget", r.budget},
           {"successes_collected", r.successes_collected},
           {"successes_kept", r.successes_kept},
           {"dataset_records", r.dataset_records},
           {"snr", r.snr},
           {"relative_improvement", optional_number(r.relative_improvement)},
           {"zero_success_warning", r.zero_success_warning},
           {"retrained", r.retrained},
           {"mode", r.mode},
           {"alpha", r.alpha}};
}

std::optional<double> relative_improvement(double before, double after) {
  if (before == 0.0) return std::nullopt;
  return (after - before) / before;
}

RolloutPlan rollout_plan_for(const RoundPlan& plan, int round_index) {
  RolloutPlan r;
  r.starts = plan.starts;
  r.attempts = plan.attempts;
  r.alpha = plan.alpha;
  r.budget = plan.budget;
  r.round = round_index;
  // 1000 seeds per round, 100000 per improvement seed.
  r.seed_base = kExploreSeedBase + plan.seed * 100'000 + static_cast<std::uint64_t>(round_index) * 1000;
  return r;
}

namespace {

double eval_success(const vib::Model& model, const env::EnvConfig& cfg, int episodes) {
  return evaluate(model, cfg, episodes, 1, vib::ActMode::kBase, 0.0).success_rate;
}

}  // namespace

RoundResult run_round(const vib::Model& model, const std::vector<env::TrajectoryRecord>& dataset,
                      const RoundPlan& plan, const RoundContext& ctx, int round_index,
                      std::optional<double> before) {
  plan.validate();
  check_compatible(model, ctx.env);
  require(!dataset.empty(), ErrorKind::kInput, "improvement needs a non-empty dataset");
  if (plan.mode == vib::ActMode::kExplore && !model.plugin)
    fail(ErrorKind::kConfig, "explore mode needs a checkpoint with the plug-in");

  ImprovementRoundReport report;
  report.round = round_index;
  report.mode = vib::to_string(plan.mode);
  report.alpha = plan.alpha;
  report.success_before = before ? *before : eval_success(model, ctx.env, plan.eval_episodes);

  const RolloutPlan rp = rollout_plan_for(plan, round_index);
  RolloutBatch batch = collect_rollouts(model, ctx.env, rp, plan.mode);
  report.budget = rp.effective_budget();
  report.rollouts_used = batch.rollouts_used;
  report.pass_at_5 = batch.pass_at(5);
  report.average_jerk = batch.mean_jerk(ctx.env.dt());

  for (auto& r : batch.records) r.source = env::Source::kRollout;
  const auto successes = filter_successes(batch.records);
  report.successes_collected = static_cast<int>(successes.size());

  RoundResult out{model, {}, dataset, std::move(batch)};
  if (successes.empty()) {
    report.zero_success_warning = true;
    report.success_after = report.success_before;
  } else {
    out.dataset = aggregate_dataset(dataset, successes, plan.cap);
    report.successes_kept = static_cast<int>(out.dataset.size() - dataset.size());
    vib::TrainingConfig training = ctx.training;
    const int iterations =
        plan.retrain_iterations > 0 ? plan.retrain_iterations : training.iterations;
    if (plan.from_scratch) {
      out.model = initialize_model(ctx.env, model.policy.config(),
                                   model.plugin ? model.plugin->config() : vib::VibConfig{},
                                   model.plugin.has_value(), out.dataset,
                                   training.seed + static_cast<std::uint64_t>(round_index));
    }
    training.use_vib = out.model.plugin.has_value();
    train_model(out.model, out.dataset, training, iterations);
    report.retrained = true;
    report.success_after = eval_success(out.model, ctx.env, plan.eval_episodes);
  }
  report.dataset_records = out.dataset.size();
  if (out.model.plugin)
    report.snr = analysis::snr_report(dataset_spectrum(out.model, out.dataset), ctx.threshold_db);
  report.relative_improvement = relative_improvement(report.success_before, report.success_after);
  out.report = std::move(report);
  return out;
}

std::vector<RoundResult> run_rounds(const vib::Model& model,
                                    const std::vector<env::TrajectoryRecord>& dataset,
                                    const std::vector<RoundPlan>& plans, const RoundContext& ctx) {
  require(!plans.empty(), ErrorKind::kConfig, "improve needs at least one round plan");
  std::vector<RoundResult> out;
  out.reserve(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const vib::Model& m = out.empty() ? model : out.back().model;
    const auto& d = out.empty() ? dataset : out.back().dataset;
    std::optional<double> before;
    if (!out.empty()) before = out.back().report.success_after;
    out.push_back(run_round(m, d, plans[i], ctx, static_cast<int>(i) + 1, before));
  }
  return out;
}

}  // namespace onm::improve

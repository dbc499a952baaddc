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

#include <set>

#include "doctest.h"

#include "onm/errors.hpp"
#include "onm/improve/pipeline.hpp"
#include "onm/improve/rollouts.hpp"
#include "onm/improve/rounds.hpp"

using namespace onm;
using namespace onm::improve;

namespace {

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an onm::Error");
  return ErrorKind::kIo;
}

env::TrajectoryRecord stub(bool success, std::uint64_t seed) {
  env::TrajectoryRecord r;
  r.success = success;
  r.seed = seed;
  r.source = env::Source::kRollout;
  r.actions = Eigen::MatrixXd::Zero(1, 2);
  r.observations = Eigen::MatrixXd::Zero(1, 7);
  r.positions = Eigen::MatrixXd::Zero(2, 2);
  return r;
}

policy::PolicyConfig tiny_policy(const env::EnvConfig& cfg) {
  policy::PolicyConfig pc = default_policy_config(cfg);
  pc.horizon = 4;
  pc.embed_width = 8;
  pc.encoder_hidden = 16;
  pc.head_hidden = 32;
  pc.head_layers = 2;
  pc.step_code_width = 4;
  pc.train_steps = 8;
  pc.inference_steps = 4;
  return pc;
}

vib::VibConfig tiny_vib() {
  vib::VibConfig v;
  v.latent_dim = 4;
  v.hidden = 16;
  v.layers = 2;
  return v;
}

// A model with a few hundred steps of training: far from the expert, but
// its rollouts are not all failures on a loose tolerance.
struct Fixture {
  env::EnvConfig env;
  std::vector<env::TrajectoryRecord> demos;
  vib::Model model;
  vib::TrainingConfig training;

  Fixture() {
    env = env::EnvConfig::reach();
    env.success_tolerance = 0.08;
    demos = env::generate_demos(env, 10, 0, 4);
    model = initialize_model(env, tiny_policy(env), tiny_vib(), true, demos, 0);
    training.iterations = 400;
    training.batch_size = 32;
    training.optimizer.learning_rate = 1e-3;
    train_model(model, demos, training, training.iterations);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

RoundPlan small_plan() {
  RoundPlan p;
  p.starts = 4;
  p.attempts = 3;
  p.cap = 3;
  p.eval_episodes = 10;
  p.retrain_iterations = 20;
  return p;
}

}  // namespace

TEST_CASE("filter_successes: all failures, mixed and idempotent") {
  CHECK(filter_successes({stub(false, 0), stub(false, 1)}).empty());
  std::vector<env::TrajectoryRecord> mixed;
  for (int i = 0; i < 10; ++i) mixed.push_back(stub(i % 3 == 0 && i < 9, i));
  const auto kept = filter_successes(mixed);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].seed == 0);
  CHECK(kept[1].seed == 3);
  CHECK(kept[2].seed == 6);
  CHECK(filter_successes(kept).size() == kept.size());
}

TEST_CASE("aggregate_dataset: empty, capped and unlimited") {
  const std::vector<env::TrajectoryRecord> expert = {stub(true, 100), stub(true, 101)};
  CHECK(aggregate_dataset(expert, {}, 5).size() == 2);
  std::vector<env::TrajectoryRecord> found;
  for (int i = 0; i < 9; ++i) found.push_back(stub(true, i));
  const auto capped = aggregate_dataset(expert, found, 5);
  REQUIRE(capped.size() == 7);
  CHECK(capped[0].seed == 100);
  CHECK(capped[2].seed == 0);
  CHECK(capped[6].seed == 4);
  CHECK(aggregate_dataset(expert, found, 0).size() == 11);
  CHECK(aggregate_dataset(expert, found, 20).size() == 11);
}

TEST_CASE("relative_improvement: arithmetic and zero baseline") {
  CHECK(*relative_improvement(0.47, 0.56) == doctest::Approx(0.191489).epsilon(1e-5));
  CHECK(*relative_improvement(0.5, 0.25) == doctest::Approx(-0.5));
  CHECK(!relative_improvement(0.0, 0.3).has_value());
}

TEST_CASE("round plan: validation and JSON") {
  RoundPlan p;
  p.attempts = 0;
  CHECK(kind_of([&] { p.validate(); }) == ErrorKind::kConfig);
  p = RoundPlan{};
  p.budget = 5;  // fewer than starts
  CHECK(kind_of([&] { p.validate(); }) == ErrorKind::kConfig);
  nlohmann::json j = RoundPlan{};
  j["mode"] = "cond-noise";
  j["alpha"] = 1.0;
  const auto q = j.get<RoundPlan>();
  CHECK(q.mode == vib::ActMode::kCondNoise);
  CHECK(q.alpha == 1.0);
  j["starts"] = "many";
  CHECK(kind_of([&] { j.get<RoundPlan>(); }) == ErrorKind::kConfig);
}

TEST_CASE("collect_expert_rollouts: perfect controller gives Pass@5 = 1") {
  const auto cfg = env::EnvConfig::reach();
  RolloutPlan plan;
  plan.starts = 6;
  plan.attempts = 5;
  plan.seed_base = 0;  // the expert solves every seed below 100
  const auto b = collect_expert_rollouts(cfg, plan, 8);
  CHECK(b.rollouts_used == 30);
  CHECK(filter_successes(b.records).size() == 30);
  CHECK(*b.pass_at(5) == 1.0);
  CHECK(b.success_rate() == 1.0);
}

TEST_CASE("collect_rollouts: budget accounting is exact and attempt-major") {
  const auto& f = fixture();
  RolloutPlan plan;
  plan.starts = 3;
  plan.attempts = 5;
  plan.budget = 7;
  const auto b = collect_rollouts(f.model, f.env, plan, vib::ActMode::kExplore);
  CHECK(b.rollouts_used == 7);
  CHECK(b.records.size() == 7);
  REQUIRE(b.outcomes.size() == 3);
  CHECK(b.outcomes[0].size() == 3);
  CHECK(b.outcomes[1].size() == 2);
  CHECK(b.outcomes[2].size() == 2);
  CHECK(!b.pass_at(5).has_value());
  CHECK(b.records[0].seed == plan.start_seed(0));
  CHECK(b.records[3].seed == plan.start_seed(0));
}

TEST_CASE("collect_rollouts: base mode and alpha 0 are deterministic") {
  const auto& f = fixture();
  RolloutPlan plan;
  plan.starts = 2;
  plan.attempts = 2;
  for (auto mode : {vib::ActMode::kBase, vib::ActMode::kExplore}) {
    plan.alpha = mode == vib::ActMode::kBase ? 2.0 : 0.0;
    const auto a = collect_rollouts(f.model, f.env, plan, mode);
    const auto b = collect_rollouts(f.model, f.env, plan, mode);
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].actions == b.records[i].actions);
    // Repeated attempts from one start replay the same episode.
    CHECK(a.records[0].actions == a.records[2].actions);
    CHECK(a.outcomes == b.outcomes);
  }
}

TEST_CASE("collect_rollouts: alpha 2 attempts from one start differ") {
  const auto& f = fixture();
  RolloutPlan plan;
  plan.starts = 3;
  plan.attempts = 2;
  const auto b = collect_rollouts(f.model, f.env, plan, vib::ActMode::kExplore);
  for (int s = 0; s < 3; ++s) CHECK(b.records[s].actions != b.records[s + 3].actions);
  const auto again = collect_rollouts(f.model, f.env, plan, vib::ActMode::kExplore);
  CHECK(again.records[4].actions == b.records[4].actions);
}

TEST_CASE("collect_rollouts: env mismatch is a config error") {
  const auto& f = fixture();
  CHECK(kind_of([&] {
          collect_rollouts(f.model, env::EnvConfig::push(), RolloutPlan{}, vib::ActMode::kBase);
        }) == ErrorKind::kConfig);
}

TEST_CASE("run_round: untrained policy completes with the zero-success flag") {
  env::EnvConfig cfg = env::EnvConfig::reach();
  const auto demos = env::generate_demos(cfg, 3, 0, 4);
  // Zero-initialized weights: every chunk is the normalizer midpoint.
  const auto m = initialize_model(cfg, tiny_policy(cfg), tiny_vib(), true, demos, 0);
  vib::Model zero = m;
  for (auto* net : {&zero.policy.encoder(), &zero.policy.head()})
    for (auto& l : net->layers()) l.weight.setZero(), l.bias.setZero();
  RoundContext ctx{cfg, {}, 0.0};
  const auto r = run_round(zero, demos, small_plan(), ctx);
  CHECK(r.report.zero_success_warning);
  CHECK(!r.report.retrained);
  CHECK(r.report.successes_collected == 0);
  CHECK(r.report.success_after == r.report.success_before);
  CHECK(r.report.rollouts_used == 12);
  CHECK(r.dataset.size() == demos.size());
  CHECK(r.model.base_checksum() == zero.base_checksum());
  CHECK(!r.report.relative_improvement.has_value());
}

TEST_CASE("run_round: report arithmetic and the success-only contract") {
  const auto& f = fixture();
  RoundContext ctx{f.env, f.training, 0.0};
  const auto plan = small_plan();
  const auto r = run_round(f.model, f.demos, plan, ctx, 1);
  const auto& rep = r.report;
  INFO(nlohmann::json(rep).dump());
  CHECK(rep.round == 1);
  CHECK(rep.rollouts_used == 12);
  CHECK(rep.rollouts_used <= rep.budget);
  CHECK(rep.successes_kept == std::min(plan.cap, rep.successes_collected));
  CHECK(r.dataset.size() == f.demos.size() + rep.successes_kept);
  CHECK(rep.dataset_records == r.dataset.size());
  for (std::size_t i = f.demos.size(); i < r.dataset.size(); ++i) {
    CHECK(r.dataset[i].success);
    CHECK(r.dataset[i].source == env::Source::kRollout);
  }
  CHECK(rep.success_before >= 0.0);
  CHECK(rep.success_after <= 1.0);
  CHECK(rep.pass_at_5.has_value() == (plan.attempts >= 5));
  if (rep.success_before > 0.0)
    CHECK(*rep.relative_improvement ==
          doctest::Approx((rep.success_after - rep.success_before) / rep.success_before));
  REQUIRE(rep.successes_collected > 0);
  CHECK(rep.retrained);
  CHECK(r.model.base_checksum() != f.model.base_checksum());
  CHECK(rep.snr["dims"].size() == 4);
  CHECK(rep.mode == "explore");
}

TEST_CASE("run_rounds: one plan matches run_round, indices increase") {
  const auto& f = fixture();
  RoundContext ctx{f.env, f.training, 0.0};
  const auto single = run_round(f.model, f.demos, small_plan(), ctx, 1);
  const auto chained = run_rounds(f.model, f.demos, {small_plan()}, ctx);
  REQUIRE(chained.size() == 1);
  CHECK(nlohmann::json(chained[0].report) == nlohmann::json(single.report));
  CHECK(chained[0].model.base_checksum() == single.model.base_checksum());

  const auto two = run_rounds(f.model, f.demos, {small_plan(), small_plan()}, ctx);
  REQUIRE(two.size() == 2);
  CHECK(two[0].report.round == 1);
  CHECK(two[1].report.round == 2);
  CHECK(two[1].report.success_before == two[0].report.success_after);
  // Later rounds explore fresh start seeds.
  CHECK(rollout_plan_for(small_plan(), 2).start_seed(0) != rollout_plan_for(small_plan(), 1).start_seed(0));
  CHECK(kind_of([&] { run_rounds(f.model, f.demos, {}, ctx); }) == ErrorKind::kConfig);
}

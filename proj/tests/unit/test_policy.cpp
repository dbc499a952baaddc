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

#include <cmath>

#include "doctest.h"

#include "onm/errors.hpp"
#include "onm/nn/adamw.hpp"
#include "onm/policy/diffusion_policy.hpp"
#include "onm/policy/schedule.hpp"
#include "support/test_support.hpp"

using namespace onm;
using namespace onm::policy;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PolicyConfig small_config() {
  PolicyConfig c;
  c.obs_dim = 3;
  c.horizon = 2;
  c.embed_width = 4;
  c.encoder_hidden = 6;
  c.encoder_layers = 2;
  c.head_hidden = 8;
  c.head_layers = 2;
  c.step_code_width = 4;
  c.train_steps = 8;
  c.inference_steps = 4;
  c.action_bound = 1.0;
  return c;
}

DiffusionPolicy random_policy(std::uint64_t seed, PolicyConfig c = small_config()) {
  nn::RngStream rng(seed, "init");
  DiffusionPolicy p(c, ActionNormalizer::identity(c.action_dim), rng);
  // Nonzero biases so every parameter is exercised.
  for (auto* net : {&p.encoder(), &p.head()})
    for (auto& l : net->layers()) l.bias = rng.normal_vector(l.bias.size()) * 0.1;
  return p;
}

TrainingBatch random_batch(const PolicyConfig& c, Eigen::Index n, std::uint64_t seed) {
  nn::RngStream rng(seed, "batch");
  TrainingBatch b;
  b.observations = rng.normal_matrix(c.obs_dim, n);
  b.chunks = rng.normal_matrix(c.chunk_size(), n).cwiseMax(-1.0).cwiseMin(1.0);
  return b;
}

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an onm::Error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("encode_observation: zero parameters, determinism, straight-line oracle") {
  const PolicyConfig c = small_config();
  DiffusionPolicy zero(c, ActionNormalizer::identity(2));
  VectorXd o(3);
  o << 0.2, -0.4, 0.9;
  CHECK(zero.encode_observation(o).isZero(0.0));

  const DiffusionPolicy p = random_policy(1);
  const VectorXd e1 = p.encode_observation(o);
  CHECK(e1 == p.encode_observation(o));

  // Independent per-layer loop.
  VectorXd a = o;
  const auto& layers = p.encoder().layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    VectorXd z(layers[l].weight.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      double s = layers[l].bias(i);
      for (Eigen::Index j = 0; j < a.size(); ++j) s += layers[l].weight(i, j) * a(j);
      z(i) = (l + 1 < layers.size()) ? std::max(s, 0.0) : s;
    }
    a = z;
  }
  CHECK((a - e1).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(kind_of([&] { p.encode_observation(VectorXd::Zero(4)); }) == ErrorKind::kShape);
}

TEST_CASE("make_schedule: K = 1, monotone cosine, linear product oracle") {
  const auto one = make_schedule(1, ScheduleKind::kSquaredCosine);
  CHECK(one.alpha_bar.size() == 2);
  CHECK(one.alpha_bar(0) == 1.0);
  CHECK(one.alpha_bar(1) < 1.0);
  CHECK(one.alpha_bar(1) > 0.0);

  const auto cos16 = make_schedule(16, "squared-cosine");
  for (int k = 1; k <= 16; ++k) CHECK(cos16.alpha_bar(k) < cos16.alpha_bar(k - 1));

  const auto lin = make_schedule(16, "linear");
  double prod = 1.0;
  for (int k = 1; k <= 16; ++k) {
    const double beta = 1e-4 + (0.02 - 1e-4) * double(k - 1) / 15.0;
    prod *= 1.0 - beta;
    CHECK(lin.alpha_bar(k) == doctest::Approx(prod).epsilon(1e-14));
  }
  CHECK(kind_of([] { make_schedule(16, "quadratic"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { make_schedule(0, ScheduleKind::kLinear); }) == ErrorKind::kConfig);
}

TEST_CASE("ddim_timesteps: K = 16 with 8 steps") {
  CHECK(ddim_timesteps(16, 8) == std::vector<int>{16, 14, 12, 10, 8, 6, 4, 2});
  CHECK(ddim_timesteps(16, 1) == std::vector<int>{16});
  CHECK(kind_of([] { ddim_timesteps(4, 5); }) == ErrorKind::kConfig);
}

TEST_CASE("add_noise: arithmetic, limits and range") {
  NoiseSchedule s;
  s.steps = 3;
  s.beta = VectorXd::Zero(4);
  s.alpha_bar.resize(4);
  s.alpha_bar << 1.0, 1.0, 0.25, 0.0;
  MatrixXd a0 = MatrixXd::Ones(2, 2), eps(2, 2);
  eps << 0.3, -0.2, 1.5, 0.0;
  CHECK(add_noise(a0, eps, 1, s) == a0);
  CHECK(add_noise(a0, MatrixXd::Zero(2, 2), 2, s)(0, 0) == 0.5);
  CHECK(add_noise(a0, eps, 3, s) == eps);
  CHECK(kind_of([&] { add_noise(a0, eps, 0, s); }) == ErrorKind::kIndex);
  CHECK(kind_of([&] { add_noise(a0, eps, 4, s); }) == ErrorKind::kIndex);
}

TEST_CASE("ddim_update: the true noise recovers a0 from every step") {
  for (auto kind : {ScheduleKind::kSquaredCosine, ScheduleKind::kLinear}) {
    const auto s = make_schedule(16, kind);
    nn::RngStream rng(3, "ddim");
    const MatrixXd a0 = rng.normal_matrix(8, 2).cwiseMax(-1.0).cwiseMin(1.0);
    const MatrixXd eps = rng.normal_matrix(8, 2);
    for (int k = 1; k <= 16; ++k) {
      for (int kp : {0, k - 1}) {
        MatrixXd x = add_noise(a0, eps, k, s);
        const MatrixXd x0 = ddim_update(x, eps, k, kp, s, 1.0);
        CHECK((x0 - a0).cwiseAbs().maxCoeff() < 1e-10);
        const MatrixXd expect = kp == 0 ? a0 : add_noise(a0, eps, kp, s);
        CHECK((x - expect).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
}

TEST_CASE("step_code: interleaved sinusoids") {
  const VectorXd c = step_code(3, 4);
  CHECK(c(0) == doctest::Approx(std::sin(3.0)));
  CHECK(c(1) == doctest::Approx(std::cos(3.0)));
  CHECK(c(2) == doctest::Approx(std::sin(0.3)));
  CHECK(c(3) == doctest::Approx(std::cos(0.3)));
}

TEST_CASE("normalizer: round trip, bounds and constant dimension") {
  MatrixXd acts(3, 2);
  acts << -0.04, 0.01, 0.02, 0.01, 0.04, 0.01;
  const auto n = ActionNormalizer::fit(acts);
  MatrixXd chunk(1, 2);
  chunk << -0.04, 0.01;
  CHECK(n.normalize(chunk)(0, 0) == doctest::Approx(-1.0));
  CHECK(n.normalize(chunk)(0, 1) == doctest::Approx(0.0));
  chunk << 0.04, 0.5;
  CHECK(n.normalize(chunk)(0, 0) == doctest::Approx(1.0));
  CHECK(n.normalize(chunk)(0, 1) == doctest::Approx(0.49));
  CHECK((n.denormalize(n.normalize(chunk)) - chunk).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("predict_noise: zero head, determinism and shape checks") {
  const PolicyConfig c = small_config();
  DiffusionPolicy zero(c, ActionNormalizer::identity(2));
  const MatrixXd chunk = MatrixXd::Constant(2, 2, 0.3);
  CHECK(zero.predict_noise(chunk, VectorXd::Ones(4), 3).isZero(0.0));

  const DiffusionPolicy p = random_policy(2);
  const MatrixXd e1 = p.predict_noise(chunk, VectorXd::Ones(4), 3);
  CHECK(e1.rows() == 2);
  CHECK(e1.cols() == 2);
  CHECK(e1 == p.predict_noise(chunk, VectorXd::Ones(4), 3));
  CHECK(kind_of([&] { p.predict_noise(MatrixXd::Zero(3, 2), VectorXd::Ones(4), 3); }) ==
        ErrorKind::kShape);
  CHECK(kind_of([&] { p.predict_noise(chunk, VectorXd::Ones(4), 9); }) == ErrorKind::kIndex);
}

TEST_CASE("ddim_sample: deterministic given the seed, entries bounded") {
  const DiffusionPolicy p = random_policy(4);
  const VectorXd c = VectorXd::LinSpaced(4, -1.0, 1.0);
  nn::RngStream r1(11, "sampler"), r2(11, "sampler"), r3(12, "sampler");
  const MatrixXd a = p.ddim_sample(c, r1);
  CHECK(a == p.ddim_sample(c, r2));
  CHECK(a != p.ddim_sample(c, r3));
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
  // Explicit-noise entry point matches the rng one.
  nn::RngStream r4(11, "sampler");
  const VectorXd x_init = r4.normal_vector(p.config().chunk_size());
  CHECK(p.ddim_sample_from(c, x_init, p.config().inference_steps) == a);
}

TEST_CASE("to_actions: clipped to the action bound") {
  PolicyConfig c = small_config();
  c.action_bound = 0.04;
  MatrixXd acts(2, 2);
  acts << -0.1, -0.1, 0.1, 0.1;
  DiffusionPolicy p(c, ActionNormalizer::fit(acts));
  const MatrixXd out = p.to_actions(MatrixXd::Ones(2, 2));
  CHECK(out.cwiseAbs().maxCoeff() == doctest::Approx(0.04));
}

TEST_CASE("imitation_loss: zero head gives about one per element") {
  const PolicyConfig c = small_config();
  DiffusionPolicy zero(c, ActionNormalizer::identity(2));
  const auto batch = random_batch(c, 4000, 7);
  nn::RngStream rng(8, "imitation");
  const auto loss = zero.imitation_loss(batch, rng);
  // Mean of 16000 squared standard normals: sd of the mean ~ 0.011.
  CHECK(loss.value == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("imitation_loss: matches an independent per-sample loop") {
  const PolicyConfig c = small_config();
  const DiffusionPolicy p = random_policy(5);
  const auto batch = random_batch(c, 9, 6);
  nn::RngStream rng(21, "imitation");
  const double value = p.imitation_loss(batch, rng).value;

  nn::RngStream replay(21, "imitation");
  std::vector<int> ks(9);
  for (auto& k : ks) k = static_cast<int>(replay.uniform_int(1, c.train_steps));
  const MatrixXd eps = replay.normal_matrix(c.chunk_size(), 9);
  double total = 0.0;
  for (int b = 0; b < 9; ++b) {
    const double ab = p.schedule().alpha_bar(ks[b]);
    const VectorXd noisy = std::sqrt(ab) * batch.chunks.col(b) + std::sqrt(1.0 - ab) * eps.col(b);
    const VectorXd cond = p.encode_observation(batch.observations.col(b));
    const MatrixXd pred = p.predict_noise(unflatten_chunk(noisy, c.horizon, c.action_dim), cond, ks[b]);
    total += (flatten_chunk(pred) - eps.col(b)).squaredNorm();
  }
  CHECK(value == doctest::Approx(total / (9.0 * c.chunk_size())).epsilon(1e-12));
}

TEST_CASE("imitation_loss: empty batch is an input error") {
  const DiffusionPolicy p = random_policy(5);
  TrainingBatch empty;
  empty.observations.resize(3, 0);
  empty.chunks.resize(4, 0);
  nn::RngStream rng(1, "imitation");
  CHECK(kind_of([&] { p.imitation_loss(empty, rng); }) == ErrorKind::kInput);
}

TEST_CASE("imitation_loss: gradients match central finite differences") {
  const PolicyConfig c = small_config();
  DiffusionPolicy p = random_policy(9);
  const auto batch = random_batch(c, 5, 10);
  const auto loss_at = [&] {
    nn::RngStream rng(33, "imitation");
    return p.imitation_loss(batch, rng).value;
  };
  nn::RngStream rng(33, "imitation");
  auto res = p.imitation_loss(batch, rng);
  const auto fd = testing::finite_difference_check(p.parameters(), res.grads.refs(), loss_at);
  INFO("worst " << fd.worst);
  CHECK(fd.max_rel_error < 1e-4);
}

TEST_CASE("training: constant +0.5 chunks are reproduced by the sampler") {
  PolicyConfig c = small_config();
  c.action_dim = 1;
  c.head_hidden = 32;
  nn::RngStream init(2, "init");
  DiffusionPolicy p(c, ActionNormalizer::identity(1), init);
  nn::AdamWConfig oc;
  oc.learning_rate = 2e-3;
  nn::AdamW<double> opt(oc);
  nn::RngStream data(3, "data"), noise(4, "imitation");
  for (int it = 0; it < 20000; ++it) {
    TrainingBatch b;
    b.observations = data.normal_matrix(c.obs_dim, 64);
    b.chunks = MatrixXd::Constant(c.chunk_size(), 64, 0.5);
    auto loss = p.imitation_loss(b, noise);
    opt.step(p.parameters(), loss.grads.refs());
  }
  nn::RngStream obs(5, "obs");
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    nn::RngStream s(100 + t, "sampler");
    const MatrixXd a = p.ddim_sample(p.encode_observation(obs.normal_vector(c.obs_dim)), s);
    worst = std::max(worst, (a.array() - 0.5).abs().maxCoeff());
  }
  CHECK(worst < 0.05);
}

TEST_CASE("checkpoint: policy round-trips bit-exactly") {
  const DiffusionPolicy p = random_policy(12);
  nn::Checkpoint ck;
  p.save(ck);
  const auto q = DiffusionPolicy::load(nn::Checkpoint::from_json(ck.to_json()));
  VectorXd o(3);
  o << 0.1, 0.2, 0.3;
  CHECK(q.encode_observation(o) == p.encode_observation(o));
  nn::RngStream r1(1, "s"), r2(1, "s");
  CHECK(q.ddim_sample(p.encode_observation(o), r1) == p.ddim_sample(p.encode_observation(o), r2));
}

TEST_CASE("config: validation and JSON field errors") {
  PolicyConfig c = small_config();
  c.inference_steps = 20;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::kConfig);
  nlohmann::json j = small_config();
  j["horizon"] = "eight";
  try {
    j.get<PolicyConfig>();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("policy.horizon") != std::string::npos);
  }
}

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
#include <limits>

#include "doctest.h"

#include "onm/errors.hpp"
#include "onm/nn/adamw.hpp"
#include "onm/nn/checkpoint.hpp"
#include "onm/nn/dense_net.hpp"
#include "onm/nn/gaussian.hpp"
#include "onm/nn/rng.hpp"
#include "support/test_support.hpp"

using namespace onm;
using nn::DenseNetd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

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

// Same formula as tests/oracles/dense_forward.py.
DenseNetd formula_net() {
  DenseNetd net({3, 5, 4, 2});
  for (std::size_t l = 0; l < net.depth(); ++l) {
    auto& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      layer.bias(i) = 0.1 * std::cos(0.23 * static_cast<double>(i + 1) + static_cast<double>(l));
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = 0.5 * std::sin(0.37 * static_cast<double>(i + 1) +
                                            0.11 * static_cast<double>(j + 1) + static_cast<double>(l));
    }
  }
  return net;
}

double sum_loss(const DenseNetd& net, const MatrixXd& x, const MatrixXd& w) {
  return (net.forward(x).array() * w.array()).sum();
}

}  // namespace

TEST_CASE("forward: zero parameters give a zero vector") {
  DenseNetd net({4, 6, 3});
  VectorXd x(4);
  x << 1.0, -2.0, 3.0, 0.5;
  CHECK(net.forward(x).isZero(0.0));
  CHECK(net.forward(x).size() == 3);
}

TEST_CASE("forward: identity single layer") {
  DenseNetd net({2, 2});
  net.layers()[0].weight.setIdentity();
  VectorXd x(2);
  x << 1.0, 2.0;
  CHECK(net.forward(x) == x);
}

TEST_CASE("forward: golden value from the straight-line oracle") {
  // python3 tests/oracles/dense_forward.py
  const DenseNetd net = formula_net();
  VectorXd x(3);
  x << -0.5, -0.2, 0.1;
  const VectorXd y = net.forward(x);
  CHECK(y(0) == doctest::Approx(-0.048084230415383525).epsilon(1e-14));
  CHECK(y(1) == doctest::Approx(-0.07185430400227764).epsilon(1e-14));
}

TEST_CASE("forward: width mismatch is a shape error") {
  DenseNetd net({3, 2});
  CHECK(kind_of([&] { net.forward(VectorXd(VectorXd::Zero(4))); }) == ErrorKind::kShape);
}

TEST_CASE("forward: batched and single-sample calls agree") {
  nn::RngStream rng(3, "init");
  const auto net = DenseNetd::kaiming_uniform({5, 7, 7, 3}, rng);
  nn::RngStream data(4, "x");
  const MatrixXd x = data.normal_matrix(5, 6);
  const MatrixXd batch = net.forward(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    CHECK((batch.col(j) - net.forward(VectorXd(x.col(j)))).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward: before any recorded forward is a state error") {
  DenseNetd net({2, 3, 1});
  DenseNetd::Tape tape;
  auto g = net.zero_gradients();
  CHECK(kind_of([&] { net.backward(tape, MatrixXd::Ones(1, 1), &g); }) == ErrorKind::kState);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  nn::RngStream rng(1, "init");
  const auto net = DenseNetd::kaiming_uniform({3, 4, 2}, rng);
  DenseNetd::Tape tape;
  net.forward(MatrixXd::Ones(3, 2), tape);
  auto g = net.zero_gradients();
  const MatrixXd dx = net.backward(tape, MatrixXd::Zero(2, 2), &g);
  CHECK(g.max_abs() == 0.0);
  CHECK(dx.isZero(0.0));
}

TEST_CASE("backward: scalar linear net, dL/dw = x") {
  DenseNetd net({1, 1});
  net.layers()[0].weight(0, 0) = 0.7;
  DenseNetd::Tape tape;
  MatrixXd x(1, 1);
  x << 2.5;
  net.forward(x, tape);
  auto g = net.zero_gradients();
  const MatrixXd dx = net.backward(tape, MatrixXd::Ones(1, 1), &g);
  CHECK(g.layers[0].weight(0, 0) == 2.5);
  CHECK(g.layers[0].bias(0) == 1.0);
  CHECK(dx(0, 0) == 0.7);
}

TEST_CASE("backward: nullptr buffer propagates only the input gradient") {
  nn::RngStream rng(2, "init");
  const auto net = DenseNetd::kaiming_uniform({3, 5, 2}, rng);
  DenseNetd::Tape tape;
  nn::RngStream data(5, "x");
  const MatrixXd x = data.normal_matrix(3, 4);
  net.forward(x, tape);
  auto g = net.zero_gradients();
  const MatrixXd up = MatrixXd::Ones(2, 4);
  const MatrixXd with = net.backward(tape, up, &g);
  const MatrixXd without = net.backward(tape, up, nullptr);
  CHECK(with == without);
}

TEST_CASE("backward: random nets match central finite differences") {
  const std::vector<std::vector<Eigen::Index>> shapes = {
      {3, 4, 2}, {5, 8, 8, 3}, {2, 6, 6, 6, 4}, {7, 16, 16, 8}};
  std::uint64_t seed = 10;
  for (const auto& widths : shapes) {
    nn::RngStream rng(seed++, "init");
    auto net = DenseNetd::kaiming_uniform(widths, rng);
    for (auto& l : net.layers()) l.bias = rng.normal_vector(l.bias.size()) * 0.1;
    nn::RngStream data(seed++, "x");
    const MatrixXd x = data.normal_matrix(widths.front(), 5);
    const MatrixXd w = data.normal_matrix(widths.back(), 5);
    DenseNetd::Tape tape;
    net.forward(x, tape);
    auto g = net.zero_gradients();
    const MatrixXd dx = net.backward(tape, w, &g);
    const auto res = testing::finite_difference_check(net.parameters("net"), g.refs("net"),
                                                      [&] { return sum_loss(net, x, w); });
    INFO("worst " << res.worst);
    CHECK(res.max_rel_error < 1e-4);

    // Input gradient as well.
    MatrixXd xp = x;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < xp.size(); ++i) {
      const double orig = xp.data()[i];
      xp.data()[i] = orig + 1e-5;
      const double up = sum_loss(net, xp, w);
      xp.data()[i] = orig - 1e-5;
      const double down = sum_loss(net, xp, w);
      xp.data()[i] = orig;
      const double n = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(n - dx.data()[i]) /
                                  std::max({std::abs(n), std::abs(dx.data()[i]), testing::kFdFloor}));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("kaiming init: bounds and zero biases") {
  nn::RngStream rng(0, "init");
  const auto net = DenseNetd::kaiming_uniform({16, 32, 4}, rng);
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 16.0));
  CHECK(net.layers()[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(1.0 / 32.0));
  CHECK(net.layers()[0].bias.isZero(0.0));
  CHECK(net.layers()[1].bias.isZero(0.0));
}

TEST_CASE("adamw: zero gradient applies only the decay") {
  nn::AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  nn::AdamW<double> opt(cfg);
  MatrixXd p(1, 2), g = MatrixXd::Zero(1, 2);
  p << 2.0, -3.0;
  opt.step({{"p", p.data(), 1, 2}}, {{"p", g.data(), 1, 2}});
  CHECK(p(0, 0) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(-3.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-15));
}

TEST_CASE("adamw: first step moves by about lr against the gradient sign") {
  nn::AdamWConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  nn::AdamW<double> opt(cfg);
  MatrixXd p = MatrixXd::Zero(1, 3), g(1, 3);
  g << 0.3, -7.0, 1e-3;
  opt.step({{"p", p.data(), 1, 3}}, {{"p", g.data(), 1, 3}});
  CHECK(p(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p(0, 2) == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("adamw: five-step scalar sequence matches the hand-rolled oracle") {
  // python3 tests/oracles/adamw_sequence.py
  const double expected[] = {0.899000002, 0.8789511989397751, 0.8177186124819265,
                             0.7618683936657704, 0.7494828626342462};
  const double grads[] = {0.5, -0.3, 0.8, 0.1, -0.6};
  nn::AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.01};
  nn::AdamW<double> opt(cfg);
  MatrixXd p(1, 1), g(1, 1);
  p << 1.0;
  for (int t = 0; t < 5; ++t) {
    g(0, 0) = grads[t];
    opt.step({{"w", p.data(), 1, 1}}, {{"w", g.data(), 1, 1}});
    CHECK(p(0, 0) == doctest::Approx(expected[t]).epsilon(1e-13));
  }
  CHECK(opt.step_count() == 5);
}

TEST_CASE("adamw: non-finite gradient names the parameter") {
  nn::AdamW<double> opt;
  MatrixXd p = MatrixXd::Zero(2, 2), g = MatrixXd::Zero(2, 2);
  g(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step({{"policy.head.layer2.weight", p.data(), 2, 2}},
             {{"policy.head.layer2.weight", g.data(), 2, 2}});
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("policy.head.layer2.weight") != std::string::npos);
  }
  CHECK(p.isZero(0.0));
}

TEST_CASE("kl: closed-form examples") {
  CHECK(nn::kl_diag_gaussian_to_standard(VectorXd::Zero(5), VectorXd::Ones(5)) == 0.0);
  CHECK(nn::kl_diag_gaussian_to_standard(VectorXd::Ones(1), VectorXd::Ones(1)) == doctest::Approx(0.5));
  CHECK(nn::kl_diag_gaussian_to_standard(VectorXd::Zero(1), VectorXd::Constant(1, 2.0)) ==
        doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-15));
  CHECK(0.5 * (4.0 - 1.0 - std::log(4.0)) == doctest::Approx(0.80685).epsilon(1e-5));
}

TEST_CASE("kl: nonpositive sigma is a domain error") {
  CHECK(kind_of([] { nn::kl_diag_gaussian_to_standard(VectorXd::Zero(2), VectorXd::Zero(2)); }) ==
        ErrorKind::kDomain);
  CHECK(kind_of([] {
          nn::kl_diag_gaussian_to_standard(VectorXd::Zero(1), VectorXd::Constant(1, -1.0));
        }) == ErrorKind::kDomain);
}

TEST_CASE("kl: nonnegative on random inputs") {
  nn::RngStream rng(9, "kl");
  for (int t = 0; t < 200; ++t) {
    const VectorXd mu = rng.normal_vector(4) * 3.0;
    VectorXd sigma(4);
    for (int i = 0; i < 4; ++i) sigma(i) = std::exp(rng.uniform(-5.0, 3.0));
    CHECK(nn::kl_diag_gaussian_to_standard(mu, sigma) >= 0.0);
  }
}

TEST_CASE("reparam: alpha 0 or sigma 0 returns mu exactly") {
  nn::RngStream rng(1, "z");
  VectorXd mu(3);
  mu << 0.1, -2.0, 5.0;
  CHECK(nn::reparam_sample(mu, VectorXd::Ones(3), 0.0, rng) == mu);
  CHECK(nn::reparam_sample(mu, VectorXd::Zero(3), 2.0, rng) == mu);
  CHECK(kind_of([&] { nn::reparam_sample(mu, VectorXd::Ones(3), -1.0, rng); }) == ErrorKind::kDomain);
}

TEST_CASE("reparam: z equals alpha times the first normal draws of the stream") {
  nn::RngStream a(42, "explore");
  nn::RngStream b(42, "explore");
  const VectorXd z = nn::reparam_sample(VectorXd::Zero(4), VectorXd::Ones(4), 2.0, a);
  for (int i = 0; i < 4; ++i) CHECK(z(i) == 2.0 * b.normal());
}

TEST_CASE("rng: same seed and name repeat; different names diverge") {
  nn::RngStream a(7, "data"), b(7, "data"), c(7, "other"), d(7, "data", 1);
  bool differs_name = false, differs_salt = false;
  for (int i = 0; i < 16; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    differs_name |= x != c.normal();
    differs_salt |= x != d.normal();
  }
  CHECK(differs_name);
  CHECK(differs_salt);
}

TEST_CASE("checkpoint: tensors and nets round-trip exactly") {
  testing::TempDir dir("ckpt");
  nn::RngStream rng(5, "init");
  const auto net = DenseNetd::kaiming_uniform({3, 4, 2}, rng);
  nn::Checkpoint ck;
  ck.meta()["note"] = "x";
  ck.put_net("a.net", net);
  MatrixXd t(2, 3);
  t << 1.0 / 3.0, -0.0, 1e-300, 2.5, -7.125, std::nextafter(1.0, 2.0);
  ck.put("a.tensor", t);
  ck.save(dir / "c.json");

  const auto back = nn::Checkpoint::load(dir / "c.json");
  CHECK(back.meta()["note"] == "x");
  CHECK(back.get("a.tensor") == t);
  const auto net2 = back.get_net("a.net");
  CHECK(net2.widths() == net.widths());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    CHECK(net2.layers()[l].weight == net.layers()[l].weight);
    CHECK(net2.layers()[l].bias == net.layers()[l].bias);
  }
  CHECK(back.has_namespace("a."));
  CHECK_FALSE(back.has_namespace("plugin."));
  CHECK(back.to_json()["format_version"] == nn::Checkpoint::kFormatVersion);
}

TEST_CASE("checkpoint: missing file and missing tensor") {
  CHECK(kind_of([] { nn::Checkpoint::load("/nonexistent/dir/ck.json"); }) == ErrorKind::kNotFound);
  nn::Checkpoint ck;
  CHECK(kind_of([&] { ck.get("nope"); }) == ErrorKind::kNotFound);
}

TEST_CASE("checkpoint: unsupported format version is rejected") {
  nn::Checkpoint ck;
  auto doc = ck.to_json();
  doc["format_version"] = 99;
  CHECK_THROWS_AS(nn::Checkpoint::from_json(doc), Error);
}

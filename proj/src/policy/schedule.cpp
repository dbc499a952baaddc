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

#include "onm/policy/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "onm/errors.hpp"

namespace onm::policy {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "squared-cosine" || name == "squaredcos_cap_v2") return ScheduleKind::kSquaredCosine;
  if (name == "linear") return ScheduleKind::kLinear;
  fail(ErrorKind::kConfig, "unknown noise schedule '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "squared-cosine";
}

NoiseSchedule make_schedule(int steps, const std::string& kind) {
  return make_schedule(steps, parse_schedule_kind(kind));
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind) {
  require(steps >= 1, ErrorKind::kConfig, "noise schedule needs at least one step");
  NoiseSchedule s;
  s.steps = steps;
  s.kind = kind;
  s.beta = Eigen::VectorXd::Zero(steps + 1);
  if (kind == ScheduleKind::kLinear) {
    constexpr double lo = 1e-4, hi = 0.02;
    for (int k = 1; k <= steps; ++k)
      s.beta(k) = steps == 1 ? lo : lo + (hi - lo) * double(k - 1) / double(steps - 1);
  } else {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int k = 1; k <= steps; ++k)
      s.beta(k) = std::min(1.0 - f(k) / f(k - 1), 0.999);
  }
  s.alpha_bar = Eigen::VectorXd::Ones(steps + 1);
  for (int k = 1; k <= steps; ++k) s.alpha_bar(k) = s.alpha_bar(k - 1) * (1.0 - s.beta(k));
  return s;
}

std::vector<int> ddim_timesteps(int train_steps, int inference_steps) {
  require(inference_steps >= 1 && inference_steps <= train_steps, ErrorKind::kConfig,
          "DDIM inference steps must lie in [1, K]");
  std::vector<int> out;
  out.reserve(inference_steps);
  for (int i = 0; i < inference_steps; ++i) {
    const double t = double(train_steps) * double(inference_steps - i) / double(inference_steps);
    out.push_back(static_cast<int>(std::lround(t)));
  }
  return out;
}

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& a0, const Eigen::MatrixXd& eps, int k,
                          const NoiseSchedule& sched) {
  if (k < 1 || k > sched.steps)
    fail(ErrorKind::kIndex, "diffusion step " + std::to_string(k) + " outside [1, " +
                                std::to_string(sched.steps) + "]");
  require(a0.rows() == eps.rows() && a0.cols() == eps.cols(), ErrorKind::kShape,
          "add_noise: sample and noise shapes differ");
  const double ab = sched.alpha_bar(k);
  return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::MatrixXd ddim_update(Eigen::MatrixXd& x, const Eigen::MatrixXd& eps_hat, int k,
                            int k_prev, const NoiseSchedule& sched, double clip) {
  require(k >= 1 && k <= sched.steps && k_prev >= 0 && k_prev < k, ErrorKind::kIndex,
          "ddim_update: invalid step pair");
  const double ab = sched.alpha_bar(k);
  const double ab_prev = sched.alpha_bar(k_prev);
  Eigen::MatrixXd x0 = (x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
  if (clip > 0.0) x0 = x0.cwiseMax(-clip).cwiseMin(clip);
  x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
  return x0;
}

}  // namespace onm::policy

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

#ifndef ONM_POLICY_SCHEDULE_HPP_
#define ONM_POLICY_SCHEDULE_HPP_

#include <string>
#include <vector>

#include <Eigen/Core>

namespace onm::policy {

enum class ScheduleKind { kSquaredCosine, kLinear };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Discrete forward-noising schedule over K steps.
///
/// `alpha_bar` has K + 1 entries: alpha_bar[0] = 1 and
/// alpha_bar[k] = prod_{j<=k} (1 - beta[j]) for k = 1..K. `beta` is indexed
/// the same way with beta[0] unused (0).
struct NoiseSchedule {
  int steps = 0;
  ScheduleKind kind = ScheduleKind::kSquaredCosine;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha_bar;
};

/// Builds a schedule. Squared-cosine uses offset s = 0.008 with beta capped
/// at 0.999; linear spaces beta evenly over [1e-4, 0.02].
NoiseSchedule make_schedule(int steps, ScheduleKind kind);
NoiseSchedule make_schedule(int steps, const std::string& kind);

/// Descending diffusion steps visited by the DDIM sampler, e.g. K = 16 with
/// 8 inference steps gives 16, 14, ..., 2. The sampler always finishes at 0.
std::vector<int> ddim_timesteps(int train_steps, int inference_steps);

/// a_k = sqrt(alpha_bar_k) * a0 + sqrt(1 - alpha_bar_k) * eps.
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& a0, const Eigen::MatrixXd& eps, int k,
                          const NoiseSchedule& sched);

/// One deterministic (eta = 0) DDIM update from step k to step k_prev.
/// Returns the clean-sample estimate; `x` is overwritten with x_{k_prev}.
/// The estimate is clipped to [-clip, clip] when clip > 0.
Eigen::MatrixXd ddim_update(Eigen::MatrixXd& x, const Eigen::MatrixXd& eps_hat, int k,
                            int k_prev, const NoiseSchedule& sched, double clip);

}  // namespace onm::policy

#endif  // ONM_POLICY_SCHEDULE_HPP_

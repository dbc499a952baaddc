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

#ifndef ONM_ENV_PLANAR_HPP_
#define ONM_ENV_PLANAR_HPP_

#include <cstdint>
#include <string>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/policy/diffusion_policy.hpp"

namespace onm::env {

enum class Task { kReach, kPush };

/// Environment parameters. Positions live in the unit square [0, 1]^2.
struct EnvConfig {
  std::string name = "planar-reach";
  int horizon = 32;
  double success_tolerance = 0.02;
  double max_step = 0.04;  // per-axis displacement bound per control step
  double control_hz = 10.0;
  double obstacle_radius_min = 0.12;
  double obstacle_radius_max = 0.16;
  double mode_bias = 0.9;  // probability the expert detours left
  double robot_radius = 0.03;   // push contact only
  double object_radius = 0.05;  // push only

  Task task() const;
  int obs_dim() const;
  static constexpr int action_dim() { return 2; }
  double dt() const { return 1.0 / control_hz; }
  void validate() const;

  static EnvConfig reach();
  static EnvConfig push();
  static EnvConfig by_name(const std::string& name);
};

void to_json(nlohmann::json& j, const EnvConfig& c);
/// Validates field types and ranges; errors name the offending field.
void from_json(const nlohmann::json& j, EnvConfig& c);

struct EnvState {
  Eigen::Vector2d robot = Eigen::Vector2d::Zero();
  Eigen::Vector2d object = Eigen::Vector2d::Zero();  // push only
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  Eigen::Vector2d obstacle_center = Eigen::Vector2d::Zero();
  double obstacle_radius = 0.0;  // 0 disables the obstacle
  int step = 0;
  /// Per-episode expert preference, drawn at reset from the mode bias.
  bool expert_detours_left = true;
  std::uint64_t seed = 0;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState state;
  Eigen::VectorXd observation;
  bool done = false;
  bool success = false;
};

/// Deterministic start state and its observation.
StepResult reset(const EnvConfig& cfg, std::uint64_t seed);

/// Concatenated positions mapped from [0, 1] to [-1, 1] (obstacle radius
/// scaled by 1 / 0.2). Reach: robot, goal, obstacle centre, radius.
/// Push: robot, object, goal.
Eigen::VectorXd observe(const EnvConfig& cfg, const EnvState& state);

/// Pure success predicate on a state.
bool is_success(const EnvConfig& cfg, const EnvState& state);

/// Kinematic transition. The action is clipped per axis to max_step; motion
/// into the obstacle loses its penetrating component; in the push task the
/// object is displaced along the contact normal when the robot overlaps it.
StepResult step(const EnvConfig& cfg, const EnvState& state, const Eigen::Vector2d& action);

/// Next single action of the scripted expert.
Eigen::Vector2d expert_action(const EnvConfig& cfg, const EnvState& state);

/// H-step expert chunk, computed by rolling the expert forward on a copy of
/// the state (the environment is deterministic, so this equals closed-loop).
policy::ActionChunk scripted_expert(const EnvConfig& cfg, const EnvState& state, int horizon);

}  // namespace onm::env

#endif  // ONM_ENV_PLANAR_HPP_

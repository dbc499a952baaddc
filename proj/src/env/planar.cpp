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

#include "onm/env/planar.hpp"

#include <algorithm>
#include <cmath>

#include "onm/errors.hpp"
#include "onm/nn/rng.hpp"

namespace onm::env {

using nlohmann::json;

namespace {

constexpr double kAvoidMargin = 0.02;   // inflation used to detect a blocked path
constexpr double kDetourMargin = 0.06;  // clearance of the detour waypoint
constexpr double kPushAlignTol = 0.015;

Eigen::Vector2d clamp_unit(const Eigen::Vector2d& p) { return p.cwiseMax(0.0).cwiseMin(1.0); }

Eigen::Vector2d left_normal(const Eigen::Vector2d& u) { return {-u.y(), u.x()}; }

Eigen::Vector2d unit_or(const Eigen::Vector2d& v, const Eigen::Vector2d& fallback) {
  const double n = v.norm();
  return n > 1e-12 ? Eigen::Vector2d(v / n) : fallback;
}

// Distance from point c to the segment [a, b].
double segment_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((c - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - c).norm();
}

// Saturating move toward `target` with speed v_max.
Eigen::Vector2d move_toward(const Eigen::Vector2d& from, const Eigen::Vector2d& target, double v_max) {
  Eigen::Vector2d d = target - from;
  const double n = d.norm();
  if (n > v_max) d *= v_max / n;
  return d;
}

double field(const json& j, const char* name, double fallback) {
  if (!j.contains(name)) return fallback;
  const auto& v = j.at(name);
  if (!v.is_number()) fail(ErrorKind::kConfig, std::string("env.") + name + " must be a number");
  return v.get<double>();
}

}  // namespace

Task EnvConfig::task() const {
  if (name == "planar-reach") return Task::kReach;
  if (name == "planar-push") return Task::kPush;
  fail(ErrorKind::kConfig, "env.name: unknown environment '" + name + "'");
}

int EnvConfig::obs_dim() const { return task() == Task::kReach ? 7 : 6; }

void EnvConfig::validate() const {
  (void)task();
  require(horizon >= 1, ErrorKind::kConfig, "env.horizon must be >= 1");
  require(success_tolerance > 0.0, ErrorKind::kConfig, "env.success_tolerance must be > 0");
  require(max_step > 0.0, ErrorKind::kConfig, "env.max_step must be > 0");
  require(control_hz > 0.0, ErrorKind::kConfig, "env.control_hz must be > 0");
  require(obstacle_radius_min >= 0.0 && obstacle_radius_max >= obstacle_radius_min,
          ErrorKind::kConfig, "env.obstacle_radius_min/max must satisfy 0 <= min <= max");
  require(mode_bias >= 0.0 && mode_bias <= 1.0, ErrorKind::kConfig,
          "env.mode_bias must lie in [0, 1]");
  require(robot_radius > 0.0 && object_radius > 0.0, ErrorKind::kConfig,
          "env.robot_radius and env.object_radius must be > 0");
}

EnvConfig EnvConfig::reach() { return EnvConfig{}; }

EnvConfig EnvConfig::push() {
  EnvConfig c;
  c.name = "planar-push";
  c.horizon = 48;
  c.success_tolerance = 0.04;
  c.obstacle_radius_min = 0.0;
  c.obstacle_radius_max = 0.0;
  return c;
}

EnvConfig EnvConfig::by_name(const std::string& name) {
  if (name == "planar-reach") return reach();
  if (name == "planar-push") return push();
  fail(ErrorKind::kConfig, "env.name: unknown environment '" + name + "'");
}

void to_json(json& j, const EnvConfig& c) {
  j = json{{"name", c.name},
           {"horizon", c.horizon},
           {"success_tolerance", c.success_tolerance},
           {"max_step", c.max_step},
           {"control_hz", c.control_hz},
           {"obstacle_radius_min", c.obstacle_radius_min},
           {"obstacle_radius_max", c.obstacle_radius_max},
           {"mode_bias", c.mode_bias},
           {"robot_radius", c.robot_radius},
           {"object_radius", c.object_radius}};
}

void from_json(const json& j, EnvConfig& c) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "env: expected an object");
  std::string name = "planar-reach";
  if (j.contains("name")) {
    if (!j.at("name").is_string()) fail(ErrorKind::kConfig, "env.name must be a string");
    name = j.at("name").get<std::string>();
  }
  c = EnvConfig::by_name(name);
  if (j.contains("horizon")) {
    if (!j.at("horizon").is_number_integer())
      fail(ErrorKind::kConfig, "env.horizon must be an integer");
    c.horizon = j.at("horizon").get<int>();
  }
  c.success_tolerance = field(j, "success_tolerance", c.success_tolerance);
  c.max_step = field(j, "max_step", c.max_step);
  c.control_hz = field(j, "control_hz", c.control_hz);
  c.obstacle_radius_min = field(j, "obstacle_radius_min", c.obstacle_radius_min);
  c.obstacle_radius_max = field(j, "obstacle_radius_max", c.obstacle_radius_max);
  c.mode_bias = field(j, "mode_bias", c.mode_bias);
  c.robot_radius = field(j, "robot_radius", c.robot_radius);
  c.object_radius = field(j, "object_radius", c.object_radius);
  c.validate();
}

StepResult reset(const EnvConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::RngStream rng(seed, "env.reset");
  EnvState s;
  s.seed = seed;
  if (cfg.task() == Task::kReach) {
    s.robot = {rng.uniform(0.15, 0.85), rng.uniform(0.05, 0.15)};
    s.goal = {rng.uniform(0.15, 0.85), rng.uniform(0.85, 0.95)};
    const Eigen::Vector2d mid = 0.5 * (s.robot + s.goal);
    s.obstacle_center = mid + Eigen::Vector2d(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
    s.obstacle_radius = rng.uniform(cfg.obstacle_radius_min, cfg.obstacle_radius_max);
  } else {
    s.robot = {rng.uniform(0.3, 0.7), rng.uniform(0.08, 0.14)};
    s.object = {rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.45)};
    s.goal = {rng.uniform(0.3, 0.7), rng.uniform(0.75, 0.85)};
    s.obstacle_radius = cfg.obstacle_radius_max > 0.0
                            ? rng.uniform(cfg.obstacle_radius_min, cfg.obstacle_radius_max)
                            : 0.0;
    s.obstacle_center = {0.9, 0.5};
  }
  nn::RngStream expert_rng(seed, "env.expert");
  s.expert_detours_left = expert_rng.bernoulli(cfg.mode_bias);
  return {s, observe(cfg, s), false, is_success(cfg, s)};
}

Eigen::VectorXd observe(const EnvConfig& cfg, const EnvState& s) {
  auto n = [](const Eigen::Vector2d& p) -> Eigen::Vector2d { return 2.0 * p.array() - 1.0; };
  Eigen::VectorXd o(cfg.obs_dim());
  if (cfg.task() == Task::kReach) {
    o << n(s.robot), n(s.goal), n(s.obstacle_center), s.obstacle_radius / 0.2;
  } else {
    o << n(s.robot), n(s.object), n(s.goal);
  }
  return o;
}

bool is_success(const EnvConfig& cfg, const EnvState& s) {
  const Eigen::Vector2d& target = cfg.task() == Task::kReach ? s.robot : s.object;
  return (target - s.goal).norm() <= cfg.success_tolerance;
}

StepResult step(const EnvConfig& cfg, const EnvState& state, const Eigen::Vector2d& action) {
  EnvState s = state;
  Eigen::Vector2d a = action.cwiseMax(-cfg.max_step).cwiseMin(cfg.max_step);
  if (!a.allFinite()) a.setZero();

  if (s.obstacle_radius > 0.0) {
    const Eigen::Vector2d next = s.robot + a;
    if ((next - s.obstacle_center).norm() < s.obstacle_radius) {
      const Eigen::Vector2d normal = unit_or(s.robot - s.obstacle_center, Eigen::Vector2d(0.0, -1.0));
      const double into = a.dot(normal);
      if (into < 0.0) a -= into * normal;
    }
  }
  s.robot = clamp_unit(s.robot + a);
  if (s.obstacle_radius > 0.0) {
    const Eigen::Vector2d off = s.robot - s.obstacle_center;
    if (off.norm() < s.obstacle_radius)
      s.robot = clamp_unit(s.obstacle_center +
                           unit_or(off, Eigen::Vector2d(0.0, -1.0)) * s.obstacle_radius);
  }

  if (cfg.task() == Task::kPush) {
    const double contact = cfg.robot_radius + cfg.object_radius;
    const Eigen::Vector2d off = s.object - s.robot;
    if (off.norm() < contact) {
      const Eigen::Vector2d normal = unit_or(off, unit_or(a, Eigen::Vector2d(0.0, 1.0)));
      s.object = clamp_unit(s.robot + normal * contact);
    }
  }

  ++s.step;
  const bool success = is_success(cfg, s);
  return {s, observe(cfg, s), success || s.step >= cfg.horizon, success};
}

Eigen::Vector2d expert_action(const EnvConfig& cfg, const EnvState& s) {
  const double v_max = cfg.max_step;
  Eigen::Vector2d a;
  if (cfg.task() == Task::kReach) {
    Eigen::Vector2d target = s.goal;
    if (s.obstacle_radius > 0.0 &&
        segment_distance(s.robot, s.goal, s.obstacle_center) < s.obstacle_radius + kAvoidMargin) {
      const Eigen::Vector2d u = unit_or(s.goal - s.obstacle_center, Eigen::Vector2d(0.0, 1.0));
      const double side = s.expert_detours_left ? 1.0 : -1.0;
      target = s.obstacle_center + side * left_normal(u) * (s.obstacle_radius + kDetourMargin);
    }
    a = move_toward(s.robot, target, v_max);
  } else {
    const double contact = cfg.robot_radius + cfg.object_radius;
    const Eigen::Vector2d u = unit_or(s.goal - s.object, Eigen::Vector2d(0.0, 1.0));
    const Eigen::Vector2d behind = s.object - u * (contact + 0.01);
    const Eigen::Vector2d rel = s.robot - s.object;
    const double along = rel.dot(u);
    const double lateral = rel.dot(left_normal(u));
    const bool aligned = along < 0.0 && std::abs(lateral) < kPushAlignTol &&
                         std::abs(-along - contact) < 0.03;
    if (aligned) {
      const Eigen::Vector2d line_point = s.object - u * contact;
      const double push = std::min(v_max, (s.goal - s.object).norm());
      a = move_toward(s.robot, line_point + u * push, v_max);
    } else if (segment_distance(s.robot, behind, s.object) < contact + 0.005 && along > -contact) {
      // Go around the object on the nearer side before lining up.
      const double side = lateral >= 0.0 ? 1.0 : -1.0;
      const Eigen::Vector2d waypoint = s.object + side * left_normal(u) * (contact + 0.03) - u * 0.02;
      a = move_toward(s.robot, waypoint, v_max);
    } else {
      a = move_toward(s.robot, behind, v_max);
    }
  }
  return a.cwiseMax(-v_max).cwiseMin(v_max);
}

policy::ActionChunk scripted_expert(const EnvConfig& cfg, const EnvState& state, int horizon) {
  require(horizon >= 1, ErrorKind::kConfig, "expert chunk horizon must be >= 1");
  policy::ActionChunk chunk(horizon, EnvConfig::action_dim());
  EnvState s = state;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::Vector2d a = expert_action(cfg, s);
    chunk.row(t) = a.transpose();
    s = step(cfg, s, a).state;
  }
  return chunk;
}

}  // namespace onm::env

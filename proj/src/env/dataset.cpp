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

#include "onm/env/dataset.hpp"

#include <fstream>
#include <limits>

#include "onm/errors.hpp"
#include "onm/json_eigen.hpp"

namespace onm::env {

using nlohmann::json;

namespace {

Eigen::MatrixXd rows_matrix(const json& rows, Eigen::Index cols_hint, const char* field) {
  if (!rows.is_array()) fail(ErrorKind::kInput, std::string("record.") + field + " must be an array");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index cols = n > 0 ? static_cast<Eigen::Index>(rows[0].size()) : cols_hint;
  Eigen::MatrixXd m(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != cols)
      fail(ErrorKind::kInput, std::string("record.") + field + " is ragged");
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

}  // namespace

std::string to_string(Source s) {
  switch (s) {
    case Source::kExpert: return "expert";
    case Source::kRollout: return "rollout";
    case Source::kSteered: return "steered";
  }
  return "expert";
}

Source parse_source(const std::string& s) {
  if (s == "expert") return Source::kExpert;
  if (s == "rollout") return Source::kRollout;
  if (s == "steered") return Source::kSteered;
  fail(ErrorKind::kInput, "unknown record source '" + s + "'");
}

void to_json(json& j, const TrajectoryRecord& r) {
  j = json{{"observations", json_rows(r.observations)},
           {"actions", json_rows(r.actions)},
           {"positions", json_rows(r.positions)},
           {"success", r.success},
           {"source", to_string(r.source)},
           {"env", r.env},
           {"seed", r.seed},
           {"round", r.round}};
}

void from_json(const json& j, TrajectoryRecord& r) {
  r.observations = rows_matrix(j.at("observations"), 0, "observations");
  r.actions = rows_matrix(j.at("actions"), 2, "actions");
  r.positions = rows_matrix(j.at("positions"), 2, "positions");
  r.success = j.at("success").get<bool>();
  r.source = parse_source(j.at("source").get<std::string>());
  r.env = j.at("env").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.round = j.value("round", 0);
  require(r.observations.rows() == r.actions.rows(), ErrorKind::kInput,
          "record observations and actions are not aligned");
  require(r.positions.rows() == r.actions.rows() + 1, ErrorKind::kInput,
          "record positions must have one more row than actions");
}

Eigen::Vector2d clip_action(const EnvConfig& cfg, const Eigen::Vector2d& action) {
  return action.cwiseMax(-cfg.max_step).cwiseMin(cfg.max_step);
}

EpisodeRecorder::EpisodeRecorder(const EnvConfig& cfg, const StepResult& start, Source source,
                                 int round) {
  rec_.env = cfg.name;
  rec_.seed = start.state.seed;
  rec_.source = source;
  rec_.round = round;
  positions_.push_back(start.state.robot);
}

void EpisodeRecorder::record(const Eigen::VectorXd& observation,
                             const Eigen::Vector2d& clipped_action, const EnvState& next) {
  obs_.push_back(observation);
  actions_.push_back(clipped_action);
  positions_.push_back(next.robot);
}

TrajectoryRecord EpisodeRecorder::finish(bool success) && {
  const Eigen::Index t = static_cast<Eigen::Index>(actions_.size());
  const Eigen::Index obs_dim = obs_.empty() ? 0 : obs_[0].size();
  rec_.observations.resize(t, obs_dim);
  rec_.actions.resize(t, 2);
  rec_.positions.resize(t + 1, 2);
  for (Eigen::Index i = 0; i < t; ++i) {
    rec_.observations.row(i) = obs_[i].transpose();
    rec_.actions.row(i) = actions_[i].transpose();
  }
  for (Eigen::Index i = 0; i <= t; ++i) rec_.positions.row(i) = positions_[i].transpose();
  rec_.success = success;
  return std::move(rec_);
}

TrajectoryRecord run_expert_episode(const EnvConfig& cfg, std::uint64_t seed, int chunk_horizon) {
  StepResult cur = reset(cfg, seed);
  EpisodeRecorder rec(cfg, cur, Source::kExpert, 0);
  while (!cur.done) {
    const auto chunk = scripted_expert(cfg, cur.state, chunk_horizon);
    for (int t = 0; t < chunk.rows() && !cur.done; ++t) {
      const Eigen::Vector2d a = clip_action(cfg, chunk.row(t).transpose());
      StepResult next = step(cfg, cur.state, a);
      rec.record(cur.observation, a, next.state);
      cur = std::move(next);
    }
  }
  return std::move(rec).finish(cur.success);
}

std::vector<TrajectoryRecord> generate_demos(const EnvConfig& cfg, int n, std::uint64_t seed,
                                             int chunk_horizon) {
  require(n >= 1, ErrorKind::kInput, "generate_demos: n must be >= 1");
  std::vector<TrajectoryRecord> out;
  const std::uint64_t attempts = 10ull * static_cast<std::uint64_t>(n);
  for (std::uint64_t i = 0; i < attempts && static_cast<int>(out.size()) < n; ++i) {
    auto rec = run_expert_episode(cfg, seed * 100000ull + i, chunk_horizon);
    if (rec.success) out.push_back(std::move(rec));
  }
  if (static_cast<int>(out.size()) < n)
    fail(ErrorKind::kConfig, "scripted expert produced only " + std::to_string(out.size()) +
                                 " successes in " + std::to_string(attempts) + " attempts");
  return out;
}

EnvState replay(const EnvConfig& cfg, const TrajectoryRecord& record) {
  StepResult cur = reset(cfg, record.seed);
  for (Eigen::Index t = 0; t < record.actions.rows(); ++t)
    cur = step(cfg, cur.state, record.actions.row(t).transpose());
  return cur.state;
}

DetourSide detour_side(const EnvConfig& cfg, const TrajectoryRecord& record) {
  if (cfg.task() != Task::kReach || record.positions.rows() == 0) return DetourSide::kNone;
  const EnvState s = reset(cfg, record.seed).state;
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < record.positions.rows(); ++i) {
    const double d = (record.positions.row(i).transpose() - s.obstacle_center).norm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  const Eigen::Vector2d u = (s.goal - s.obstacle_center).normalized();
  const Eigen::Vector2d left(-u.y(), u.x());
  const double side = (record.positions.row(best).transpose() - s.obstacle_center).dot(left);
  if (side > 0.0) return DetourSide::kLeft;
  if (side < 0.0) return DetourSide::kRight;
  return DetourSide::kNone;
}

std::filesystem::path meta_path(const std::filesystem::path& dataset) {
  return std::filesystem::path(dataset.string() + ".meta.json");
}

void write_jsonl(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write dataset " + path.string());
  for (const auto& r : records) out << json(r).dump() << '\n';
}

void append_jsonl(const std::filesystem::path& path, const TrajectoryRecord& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::kIo, "cannot append to dataset " + path.string());
  out << json(record).dump() << '\n';
}

std::vector<TrajectoryRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "cannot open dataset " + path.string());
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<TrajectoryRecord>());
    } catch (const json::exception& e) {
      fail(ErrorKind::kInput, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_meta(const std::filesystem::path& dataset, const DatasetMeta& meta) {
  json doc{{"format", "onm-dataset"},
           {"format_version", DatasetMeta::kFormatVersion},
           {"env", meta.env},
           {"extra", meta.extra}};
  if (meta.normalization) doc["normalization"] = *meta.normalization;
  std::ofstream out(meta_path(dataset));
  if (!out) fail(ErrorKind::kIo, "cannot write dataset metadata for " + dataset.string());
  out << doc.dump(2) << '\n';
}

DatasetMeta read_meta(const std::filesystem::path& dataset) {
  std::ifstream in(meta_path(dataset));
  if (!in) fail(ErrorKind::kNotFound, "missing dataset metadata " + meta_path(dataset).string());
  const json doc = json::parse(in);
  if (doc.value("format_version", -1) != DatasetMeta::kFormatVersion)
    fail(ErrorKind::kConfig, "unsupported dataset format_version");
  DatasetMeta meta;
  meta.env = doc.at("env").get<EnvConfig>();
  if (doc.contains("normalization")) meta.normalization = doc["normalization"];
  meta.extra = doc.value("extra", json::object());
  return meta;
}

}  // namespace onm::env

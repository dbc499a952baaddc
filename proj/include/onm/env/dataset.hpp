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

#ifndef ONM_ENV_DATASET_HPP_
#define ONM_ENV_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/env/planar.hpp"

namespace onm::env {

enum class Source { kExpert, kRollout, kSteered };

std::string to_string(Source s);
Source parse_source(const std::string& s);

/// One episode. Row t of `observations` is the observation before action t;
/// `positions` holds the T + 1 end-effector positions including the start.
struct TrajectoryRecord {
  Eigen::MatrixXd observations;  // T x obs_dim
  Eigen::MatrixXd actions;       // T x 2, post-clipping values
  Eigen::MatrixXd positions;     // (T + 1) x 2
  bool success = false;
  Source source = Source::kExpert;
  std::string env;
  std::uint64_t seed = 0;
  int round = 0;

  Eigen::Index length() const { return actions.rows(); }
};

void to_json(nlohmann::json& j, const TrajectoryRecord& r);
void from_json(const nlohmann::json& j, TrajectoryRecord& r);

/// Accumulates an episode step by step.
class EpisodeRecorder {
 public:
  EpisodeRecorder(const EnvConfig& cfg, const StepResult& start, Source source, int round);
  void record(const Eigen::VectorXd& observation, const Eigen::Vector2d& clipped_action,
              const EnvState& next);
  TrajectoryRecord finish(bool success) &&;

 private:
  std::vector<Eigen::VectorXd> obs_;
  std::vector<Eigen::Vector2d> actions_;
  std::vector<Eigen::Vector2d> positions_;
  TrajectoryRecord rec_;
};

/// Per-step clipping applied by step(); recorded actions use it.
Eigen::Vector2d clip_action(const EnvConfig& cfg, const Eigen::Vector2d& action);

/// Runs the scripted expert for one episode from `seed`.
TrajectoryRecord run_expert_episode(const EnvConfig& cfg, std::uint64_t seed, int chunk_horizon);

/// n successful expert episodes; episode i of the search uses env seed
/// seed * 100000 + i. Throws a config error when fewer than n succeed within
/// 10 n attempts.
std::vector<TrajectoryRecord> generate_demos(const EnvConfig& cfg, int n, std::uint64_t seed,
                                             int chunk_horizon);

/// Replays the recorded actions from reset(record.seed); returns the final state.
EnvState replay(const EnvConfig& cfg, const TrajectoryRecord& record);

enum class DetourSide { kNone, kLeft, kRight };
/// Side on which a reach trajectory passed the obstacle, judged at the point
/// of closest approach relative to the obstacle-to-goal direction.
DetourSide detour_side(const EnvConfig& cfg, const TrajectoryRecord& record);

/// Sidecar metadata written next to a dataset file.
struct DatasetMeta {
  static constexpr int kFormatVersion = 1;
  EnvConfig env;
  std::optional<nlohmann::json> normalization;
  nlohmann::json extra = nlohmann::json::object();
};

std::filesystem::path meta_path(const std::filesystem::path& dataset);

void write_jsonl(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records);
void append_jsonl(const std::filesystem::path& path, const TrajectoryRecord& record);
std::vector<TrajectoryRecord> read_jsonl(const std::filesystem::path& path);
void write_meta(const std::filesystem::path& dataset, const DatasetMeta& meta);
DatasetMeta read_meta(const std::filesystem::path& dataset);

}  // namespace onm::env

#endif  // ONM_ENV_DATASET_HPP_

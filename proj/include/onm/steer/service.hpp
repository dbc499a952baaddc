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

#ifndef ONM_STEER_SERVICE_HPP_
#define ONM_STEER_SERVICE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "onm/analysis/metrics.hpp"
#include "onm/analysis/proposals.hpp"
#include "onm/env/dataset.hpp"
#include "onm/nn/rng.hpp"
#include "onm/vib/model.hpp"

namespace onm::steer {

struct HistoryEntry {
  int chunk_index = 0;
  std::string provenance;  // "auto" or "steered:<dim>:<proposal id>"
  policy::ActionChunk chunk;
  Eigen::MatrixXd positions;  // robot positions after each executed step
};

void to_json(nlohmann::json& j, const HistoryEntry& h);

struct ExecutionResult {
  Eigen::VectorXd observation;
  bool done = false;
  bool success = false;
  int step = 0;
  int steps_executed = 0;
  std::optional<env::TrajectoryRecord> record;  // set when the episode ended
};

void to_json(nlohmann::json& j, const ExecutionResult& r);

struct CreateSessionRequest {
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::optional<env::EnvConfig> env;  // defaults to the checkpoint's environment
};

/// {"checkpoint": id, "seed": n, "env": {...}}; field errors name the field.
CreateSessionRequest parse_create_request(const nlohmann::json& j);

class Session {
 public:
  using FinishHook = std::function<void(const env::TrajectoryRecord&)>;

  /// `on_finish` receives the episode record once the episode ends.
  Session(std::string id, std::string checkpoint_id, std::shared_ptr<const vib::Model> model,
          std::optional<analysis::SnrSpectrum> spectrum, env::EnvConfig cfg, std::uint64_t seed,
          FinishHook on_finish = {});

  const std::string& id() const { return id_; }

  /// Full session view. Blocks while an execution is in flight.
  nlohmann::json describe();
  nlohmann::json history();
  /// Ranked dimension list; precondition error without a spectrum.
  nlohmann::json dimensions(double threshold_db);

  /// The mutating calls below fail with a conflict error instead of waiting
  /// when another request holds the session.
  analysis::ProposalSet proposals(int dim, int batch, int k);
  ExecutionResult select(int proposal_id);
  ExecutionResult step_auto(double alpha);

  env::EnvState state();

 private:
  std::unique_lock<std::mutex> try_acquire();
  ExecutionResult execute(const policy::ActionChunk& chunk, const std::string& provenance);
  void require_running() const;

  std::string id_;
  std::string checkpoint_id_;
  std::shared_ptr<const vib::Model> model_;
  std::optional<analysis::SnrSpectrum> spectrum_;
  env::EnvConfig cfg_;
  std::uint64_t seed_;

  std::mutex mutex_;
  env::StepResult current_;
  env::EpisodeRecorder recorder_;
  nn::RngStream explore_rng_;
  std::vector<HistoryEntry> history_;
  std::optional<analysis::ProposalSet> cache_;
  std::map<int, analysis::Proposal> cache_index_;
  int next_proposal_id_ = 0;
  bool steered_ = false;
  FinishHook on_finish_;
};

struct ServiceOptions {
  double threshold_db = 0.0;
  std::optional<std::filesystem::path> record_path;  // JSONL file for finished episodes
};

class SteerService {
 public:
  explicit SteerService(ServiceOptions options = {});

  /// Makes a checkpoint available to sessions under `id`.
  void register_checkpoint(const std::string& id, vib::Model model,
                           std::optional<analysis::SnrSpectrum> spectrum = std::nullopt);
  std::vector<std::string> checkpoint_ids() const;

  std::string create_session(const CreateSessionRequest& request);
  std::shared_ptr<Session> session(const std::string& id) const;
  double threshold_db() const { return options_.threshold_db; }

  /// Finished episodes in completion order.
  std::vector<env::TrajectoryRecord> finished_records() const;

 private:
  struct Entry {
    std::shared_ptr<const vib::Model> model;
    std::optional<analysis::SnrSpectrum> spectrum;
  };

  void persist(const env::TrajectoryRecord& record);

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> checkpoints_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<env::TrajectoryRecord> finished_;
  std::uint64_t next_session_ = 1;
};

}  // namespace onm::steer

#endif  // ONM_STEER_SERVICE_HPP_

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

#include "onm/steer/service.hpp"

#include <utility>

#include "onm/errors.hpp"
#include "onm/improve/rollouts.hpp"
#include "onm/json_eigen.hpp"
#include "onm/json_fields.hpp"

namespace onm::steer {

using nlohmann::json;

namespace {

json point(const Eigen::Vector2d& p) { return json::array({p.x(), p.y()}); }

json state_json(const env::EnvConfig& cfg, const env::EnvState& s) {
  json j{{"robot", point(s.robot)}, {"goal", point(s.goal)}, {"step", s.step}};
  if (cfg.task() == env::Task::kPush) j["object"] = point(s.object);
  if (s.obstacle_radius > 0.0) {
    j["obstacle_center"] = point(s.obstacle_center);
    j["obstacle_radius"] = s.obstacle_radius;
  }
  return j;
}

}  // namespace

void to_json(json& j, const HistoryEntry& h) {
  j = json{{"chunk_index", h.chunk_index},
           {"provenance", h.provenance},
           {"chunk", json_rows(h.chunk)},
           {"positions", json_rows(h.positions)}};
}

void to_json(json& j, const ExecutionResult& r) {
  j = json{{"observation", json_vector(r.observation)},
           {"done", r.done},
           {"success", r.success},
           {"step", r.step},
           {"steps_executed", r.steps_executed}};
}

CreateSessionRequest parse_create_request(const json& j) {
  if (!j.is_object()) fail(ErrorKind::kInput, "session request must be a JSON object");
  CreateSessionRequest r;
  if (!j.contains("checkpoint")) fail(ErrorKind::kInput, "session.checkpoint is required");
  r.checkpoint = read_field(j, "checkpoint", "session", std::string{});
  r.seed = read_field(j, "seed", "session", r.seed);
  if (j.contains("env")) r.env = j.at("env").get<env::EnvConfig>();
  return r;
}

Session::Session(std::string id, std::string checkpoint_id, std::shared_ptr<const vib::Model> model,
                 std::optional<analysis::SnrSpectrum> spectrum, env::EnvConfig cfg,
                 std::uint64_t seed, FinishHook on_finish)
    : id_(std::move(id)),
      checkpoint_id_(std::move(checkpoint_id)),
      model_(std::move(model)),
      spectrum_(std::move(spectrum)),
      cfg_(std::move(cfg)),
      seed_(seed),
      current_(env::reset(cfg_, seed_)),
      recorder_(cfg_, current_, env::Source::kSteered, 0),
      explore_rng_(seed_, "explore", 0),
      on_finish_(std::move(on_finish)) {}

std::unique_lock<std::mutex> Session::try_acquire() {
  std::unique_lock<std::mutex> lock(mutex_, std::try_to_lock);
  if (!lock.owns_lock())
    fail(ErrorKind::kConflict, "session " + id_ + " is busy with another request");
  return lock;
}

void Session::require_running() const {
  if (current_.done) fail(ErrorKind::kState, "session " + id_ + ": episode already finished");
}

json Session::describe() {
  std::lock_guard<std::mutex> lock(mutex_);
  Eigen::MatrixXd path(1, 2);
  path.row(0) = env::reset(cfg_, seed_).state.robot.transpose();
  for (const auto& h : history_) {
    const Eigen::Index n = path.rows();
    path.conservativeResize(n + h.positions.rows(), 2);
    path.bottomRows(h.positions.rows()) = h.positions;
  }
  return json{{"id", id_},
              {"checkpoint", checkpoint_id_},
              {"env", cfg_},
              {"seed", seed_},
              {"horizon", model_->policy.config().horizon},
              {"step", current_.state.step},
              {"chunks", history_.size()},
              {"done", current_.done},
              {"success", current_.success},
              {"observation", json_vector(current_.observation)},
              {"state", state_json(cfg_, current_.state)},
              {"path", json_rows(path)},
              {"latent_dim", model_->plugin ? model_->plugin->config().latent_dim : 0}};
}

json Session::history() {
  std::lock_guard<std::mutex> lock(mutex_);
  return json{{"id", id_}, {"entries", history_}};
}

json Session::dimensions(double threshold_db) {
  if (!spectrum_)
    fail(ErrorKind::kPrecondition,
         "no SNR spectrum for checkpoint '" + checkpoint_id_ + "'; run `onm snr-report` first");
  const auto effective = analysis::effective_dimensions(*spectrum_, threshold_db);
  json dims = json::array();
  for (int i : analysis::rank_dimensions(*spectrum_))
    dims.push_back({{"index", i},
                    {"snr", spectrum_->ratio[i]},
                    {"snr_db", spectrum_->db[i]},
                    {"effective", spectrum_->db[i] > threshold_db}});
  return json{{"dims", std::move(dims)},
              {"effective", effective},
              {"threshold_db", threshold_db},
              {"count", spectrum_->dims()}};
}

analysis::ProposalSet Session::proposals(int dim, int batch, int k) {
  auto lock = try_acquire();
  require_running();
  if (!model_->plugin) fail(ErrorKind::kConfig, "checkpoint has no plug-in to steer");
  const int d = model_->plugin->config().latent_dim;
  if (dim < 0 || dim >= d)
    fail(ErrorKind::kIndex, "dim " + std::to_string(dim) + " out of range [0, " + std::to_string(d) + ")");
  if (k < 1) fail(ErrorKind::kInput, "k must be >= 1");
  if (batch < k) fail(ErrorKind::kInput, "batch must be >= k");
  analysis::ProposalRequest req;
  req.dim = dim;
  req.batch = batch;
  req.k = k;
  const int chunk_index = static_cast<int>(history_.size());
  analysis::ProposalSet set = analysis::propose_along_dimension(
      *model_, cfg_, current_.state, req, vib::sampler_noise(*model_, seed_, chunk_index));
  // Fresh ids so selections from an older preview are detectably stale.
  cache_index_.clear();
  for (auto& p : set.proposals) {
    p.id = next_proposal_id_++;
    cache_index_.emplace(p.id, p);
  }
  cache_ = set;
  return set;
}

ExecutionResult Session::select(int proposal_id) {
  auto lock = try_acquire();
  require_running();
  const auto it = cache_index_.find(proposal_id);
  if (it == cache_index_.end())
    fail(ErrorKind::kConflict, "proposal " + std::to_string(proposal_id) + " is not in the current preview");
  const policy::ActionChunk chunk = it->second.chunk;
  steered_ = true;
  return execute(chunk, "steered:" + std::to_string(cache_->dim) + ":" + std::to_string(proposal_id));
}

ExecutionResult Session::step_auto(double alpha) {
  auto lock = try_acquire();
  require_running();
  if (alpha < 0.0) fail(ErrorKind::kInput, "alpha must be >= 0");
  const vib::ActMode mode = alpha > 0.0 ? vib::ActMode::kExplore : vib::ActMode::kBase;
  if (mode == vib::ActMode::kExplore && !model_->plugin)
    fail(ErrorKind::kConfig, "checkpoint has no plug-in; only alpha = 0 is available");
  const auto source = improve::model_source(*model_, seed_, mode, alpha, explore_rng_);
  const policy::ActionChunk chunk =
      source(current_.state, current_.observation, static_cast<int>(history_.size()));
  return execute(chunk, "auto");
}

env::EnvState Session::state() {
  std::lock_guard<std::mutex> lock(mutex_);
  return current_.state;
}

ExecutionResult Session::execute(const policy::ActionChunk& chunk, const std::string& provenance) {
  HistoryEntry entry;
  entry.chunk_index = static_cast<int>(history_.size());
  entry.provenance = provenance;
  entry.chunk = chunk;
  std::vector<Eigen::Vector2d> positions;
  for (Eigen::Index t = 0; t < chunk.rows() && !current_.done; ++t) {
    const Eigen::Vector2d a = env::clip_action(cfg_, chunk.row(t).transpose());
    env::StepResult next = env::step(cfg_, current_.state, a);
    recorder_.record(current_.observation, a, next.state);
    current_ = std::move(next);
    positions.push_back(current_.state.robot);
  }
  entry.positions.resize(static_cast<Eigen::Index>(positions.size()), 2);
  for (std::size_t i = 0; i < positions.size(); ++i)
    entry.positions.row(static_cast<Eigen::Index>(i)) = positions[i].transpose();
  history_.push_back(std::move(entry));
  cache_.reset();
  cache_index_.clear();

  ExecutionResult out;
  out.observation = current_.observation;
  out.done = current_.done;
  out.success = current_.success;
  out.step = current_.state.step;
  out.steps_executed = static_cast<int>(positions.size());
  if (current_.done) {
    env::TrajectoryRecord rec = std::move(recorder_).finish(current_.success);
    rec.source = steered_ ? env::Source::kSteered : env::Source::kRollout;
    if (on_finish_) on_finish_(rec);
    out.record = std::move(rec);
  }
  return out;
}

SteerService::SteerService(ServiceOptions options) : options_(std::move(options)) {}

void SteerService::register_checkpoint(const std::string& id, vib::Model model,
                                       std::optional<analysis::SnrSpectrum> spectrum) {
  if (spectrum && model.plugin && spectrum->dims() != model.plugin->config().latent_dim)
    fail(ErrorKind::kConfig, "SNR spectrum width does not match checkpoint '" + id + "'");
  std::lock_guard<std::mutex> lock(mutex_);
  checkpoints_[id] = Entry{std::make_shared<const vib::Model>(std::move(model)), std::move(spectrum)};
}

std::vector<std::string> SteerService::checkpoint_ids() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, e] : checkpoints_) ids.push_back(id);
  return ids;
}

std::string SteerService::create_session(const CreateSessionRequest& request) {
  Entry entry;
  std::string id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = checkpoints_.find(request.checkpoint);
    if (it == checkpoints_.end())
      fail(ErrorKind::kNotFound, "unknown checkpoint '" + request.checkpoint + "'");
    entry = it->second;
    id = "s" + std::to_string(next_session_++);
  }
  env::EnvConfig cfg = request.env ? *request.env : env::EnvConfig::by_name(entry.model->env_name);
  cfg.validate();
  improve::check_compatible(*entry.model, cfg);
  auto session = std::make_shared<Session>(id, request.checkpoint, entry.model, entry.spectrum, cfg,
                                           request.seed,
                                           [this](const env::TrajectoryRecord& r) { persist(r); });
  std::lock_guard<std::mutex> lock(mutex_);
  sessions_.emplace(id, std::move(session));
  return id;
}

std::shared_ptr<Session> SteerService::session(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorKind::kNotFound, "unknown session '" + id + "'");
  return it->second;
}

std::vector<env::TrajectoryRecord> SteerService::finished_records() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return finished_;
}

void SteerService::persist(const env::TrajectoryRecord& record) {
  std::lock_guard<std::mutex> lock(mutex_);
  finished_.push_back(record);
  if (options_.record_path) env::append_jsonl(*options_.record_path, record);
}

}  // namespace onm::steer

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

#ifndef ONM_VIB_MODEL_HPP_
#define ONM_VIB_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/nn/adamw.hpp"
#include "onm/nn/checkpoint.hpp"
#include "onm/nn/rng.hpp"
#include "onm/policy/diffusion_policy.hpp"
#include "onm/vib/plugin.hpp"

namespace onm::vib {

/// Base policy plus the optional exploration plug-in, as stored in one
/// checkpoint. Plug-in tensors live under "plugin.*" so a checkpoint loads
/// with or without them.
struct Model {
  policy::DiffusionPolicy policy;
  std::optional<LatentPlugin> plugin;
  /// Per-dimension standard deviation of the observation embedding over the
  /// training set; scales the condition-noise baseline explorer.
  Eigen::VectorXd embedding_scale;
  std::string env_name;
  std::int64_t train_step = 0;
  /// Free-form provenance (echoed experiment config).
  nlohmann::json provenance = nlohmann::json::object();

  nn::Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const nn::Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const { to_checkpoint().save(path); }
  static Model load(const std::filesystem::path& path) {
    return from_checkpoint(nn::Checkpoint::load(path));
  }

  /// Order-independent digest of the base-path parameters (bit-exact).
  std::uint64_t base_checksum() const;
  std::uint64_t plugin_checksum() const;
};

/// Per-dimension population standard deviation of E(o) over the columns of
/// `observations`.
Eigen::VectorXd embedding_scale(const policy::DiffusionPolicy& policy,
                                const Eigen::MatrixXd& observations);

/// FNV-1a over the raw bytes of every parameter of `net`.
std::uint64_t checksum(const nn::DenseNetd& net, std::uint64_t h = 14695981039346656037ull);

/// How a conditioning embedding is produced for the noise head.
enum class ActMode {
  kBase,       // c = E(o)
  kExplore,    // c = q(z), z ~ N(mu, (alpha sigma)^2) from p(E(o))
  kCondNoise,  // c = E(o) + alpha * embedding_scale (.) eps   (baseline explorer)
};

ActMode parse_act_mode(const std::string& name);
std::string to_string(ActMode mode);

struct ActDecision {
  policy::ActionChunk normalized;  // H x action_dim in [-1, 1]
  policy::ActionChunk actions;     // raw displacements, clipped to the action bound
  Eigen::VectorXd embedding;       // conditioning actually fed to the head
  std::optional<Eigen::VectorXd> z;
};

/// Initial DDIM noise for chunk `chunk_index` of the episode started from
/// `episode_seed`. Attempt-independent, so repeated attempts from the same
/// start differ only through the exploration draws.
Eigen::VectorXd sampler_noise(const Model& model, std::uint64_t episode_seed, int chunk_index);

/// One chunk decision. `explore_rng` is consumed only by the explore and
/// condition-noise modes.
ActDecision act(const Model& model, const Eigen::VectorXd& observation, ActMode mode,
                double alpha, nn::RngStream& explore_rng, const Eigen::VectorXd& x_init);

/// Decision for an explicit conditioning embedding (used for steering).
ActDecision act_with_embedding(const Model& model, const Eigen::VectorXd& embedding,
                               const Eigen::VectorXd& x_init);

struct TrainingConfig {
  int iterations = 5000;
  int batch_size = 64;
  std::uint64_t seed = 0;
  nn::AdamWConfig optimizer;
  bool use_vib = true;
  int log_every = 100;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

struct StepLosses {
  double imitation = 0.0;
  double bottleneck = 0.0;  // 0 when the plug-in is disabled
  double total() const { return imitation + bottleneck; }
};

struct LossLogEntry {
  std::int64_t step = 0;
  StepLosses losses;
};

/// Joint optimization of the two paths: the imitation loss updates the base
/// policy, the bottleneck loss updates the plug-in. Both losses are evaluated
/// at the same parameters before either optimizer steps.
///
/// Randomness comes from three named streams ("data", "imitation",
/// "bottleneck") so enabling the plug-in never changes the draws the base
/// path sees.
class Trainer {
 public:
  Trainer(Model& model, TrainingConfig config);

  StepLosses joint_train_step(const policy::TrainingBatch& batch);

  /// Runs `iterations` steps, sampling batches from `data`. Returns the log
  /// entries emitted every `log_every` steps (and on the final step).
  std::vector<LossLogEntry> train(const policy::TrainingSet& data, int iterations,
                                  const std::function<void(const LossLogEntry&)>& on_log = {});

  nn::AdamW<double>& policy_optimizer() { return policy_opt_; }
  nn::AdamW<double>& plugin_optimizer() { return plugin_opt_; }

  void save_optimizer_state(nn::Checkpoint& ckpt) const;
  void restore_optimizer_state(const nn::Checkpoint& ckpt);

 private:
  Model& model_;
  TrainingConfig config_;
  nn::AdamW<double> policy_opt_;
  nn::AdamW<double> plugin_opt_;
  nn::RngStream data_rng_;
  nn::RngStream imitation_rng_;
  nn::RngStream bottleneck_rng_;
};

}  // namespace onm::vib

#endif  // ONM_VIB_MODEL_HPP_

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

#ifndef ONM_POLICY_DIFFUSION_POLICY_HPP_
#define ONM_POLICY_DIFFUSION_POLICY_HPP_

#include <algorithm>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/nn/checkpoint.hpp"
#include "onm/nn/dense_net.hpp"
#include "onm/nn/rng.hpp"
#include "onm/policy/schedule.hpp"

namespace onm::policy {

/// H x action_dim block of per-step displacements.
using ActionChunk = Eigen::MatrixXd;

/// Row-major flattening: entry (t, a) lands at t * action_dim + a.
Eigen::VectorXd flatten_chunk(const ActionChunk& chunk);
ActionChunk unflatten_chunk(const Eigen::VectorXd& flat, Eigen::Index horizon,
                            Eigen::Index action_dim);

struct PolicyConfig {
  int obs_dim = 0;
  int action_dim = 2;
  int horizon = 8;
  int embed_width = 32;
  int encoder_hidden = 64;
  int encoder_layers = 2;
  int head_hidden = 128;
  int head_layers = 3;
  int step_code_width = 16;
  int train_steps = 16;
  int inference_steps = 8;
  ScheduleKind schedule = ScheduleKind::kSquaredCosine;
  double action_bound = 0.04;  // max |displacement| per step and axis

  int chunk_size() const { return horizon * action_dim; }
  void validate() const;
};

void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);

/// Per-dimension min/max map from raw actions to [-1, 1].
struct ActionNormalizer {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  /// Fits to the rows of `actions` (N x action_dim). A constant dimension
  /// gets a unit half-range centred on its value.
  static ActionNormalizer fit(const Eigen::MatrixXd& actions);
  static ActionNormalizer identity(int action_dim);

  ActionChunk normalize(const ActionChunk& raw) const;
  ActionChunk denormalize(const ActionChunk& normalized) const;
};

/// Sinusoidal code of a diffusion step: [sin(k w_0), cos(k w_0), ...] with
/// w_j = 100^(-j / (width / 2)).
Eigen::VectorXd step_code(int k, int width);

/// Column-batched training examples in normalized action space.
struct TrainingBatch {
  Eigen::MatrixXd observations;  // obs_dim x B
  Eigen::MatrixXd chunks;        // (H * action_dim) x B
  Eigen::Index size() const { return observations.cols(); }
};

/// Every (observation, normalized chunk) training pair, one per column.
struct TrainingSet {
  Eigen::MatrixXd observations;  // obs_dim x N
  Eigen::MatrixXd chunks;        // (H * action_dim) x N
  Eigen::Index size() const { return observations.cols(); }

  /// Uniform sampling with replacement; one index draw per sample.
  TrainingBatch sample(Eigen::Index batch_size, nn::RngStream& rng) const;
};

struct PolicyGradients {
  nn::DenseNetd::Gradients encoder;
  nn::DenseNetd::Gradients head;

  double max_abs() const { return std::max(encoder.max_abs(), head.max_abs()); }
  nn::ParamList<double> refs();
};

struct ImitationLoss {
  double value = 0.0;
  PolicyGradients grads;
};

/// Base policy: observation encoder plus chunked-action noise-prediction head.
///
/// The head input is [noisy chunk (flattened), conditioning embedding,
/// step code]. Inference entry points evaluate one sample at a time so that
/// results are bit-identical regardless of how callers batch requests.
class DiffusionPolicy {
 public:
  DiffusionPolicy() = default;
  /// Zero-initialized parameters.
  DiffusionPolicy(PolicyConfig config, ActionNormalizer normalizer);
  /// Kaiming-uniform parameters from `init_rng`.
  DiffusionPolicy(PolicyConfig config, ActionNormalizer normalizer, nn::RngStream& init_rng);

  const PolicyConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const ActionNormalizer& normalizer() const { return normalizer_; }

  nn::DenseNetd& encoder() { return encoder_; }
  const nn::DenseNetd& encoder() const { return encoder_; }
  nn::DenseNetd& head() { return head_; }
  const nn::DenseNetd& head() const { return head_; }

  Eigen::VectorXd encode_observation(const Eigen::VectorXd& obs) const;

  /// Noise estimate with the same shape as `noisy_chunk` (H x action_dim).
  ActionChunk predict_noise(const ActionChunk& noisy_chunk, const Eigen::VectorXd& cond,
                            int k) const;

  /// Deterministic DDIM sampler; initial noise is drawn from `rng`. Returns a
  /// chunk in normalized space, every entry in [-1, 1].
  ActionChunk ddim_sample(const Eigen::VectorXd& cond, nn::RngStream& rng) const;
  ActionChunk ddim_sample(const Eigen::VectorXd& cond, int steps, nn::RngStream& rng) const;
  /// Same sampler, starting from explicit flattened noise.
  ActionChunk ddim_sample_from(const Eigen::VectorXd& cond, const Eigen::VectorXd& x_init,
                               int steps) const;

  /// Maps a normalized chunk to raw displacements clipped to the action bound.
  ActionChunk to_actions(const ActionChunk& normalized) const;

  /// Batched head input for training.
  Eigen::MatrixXd head_input(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& cond,
                             const std::vector<int>& ks) const;

  /// Mean per-element squared error between injected and predicted noise, with
  /// gradients for the encoder and head only. Draw order from `rng`: one step
  /// index per sample, then the noise matrix column by column.
  ImitationLoss imitation_loss(const TrainingBatch& batch, nn::RngStream& rng) const;

  PolicyGradients zero_gradients() const;
  nn::ParamList<double> parameters();

  void save(nn::Checkpoint& ckpt) const;
  static DiffusionPolicy load(const nn::Checkpoint& ckpt);

 private:
  void build_nets();

  PolicyConfig config_;
  NoiseSchedule schedule_;
  ActionNormalizer normalizer_;
  nn::DenseNetd encoder_;
  nn::DenseNetd head_;
};

}  // namespace onm::policy

#endif  // ONM_POLICY_DIFFUSION_POLICY_HPP_

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

#include "onm/improve/pipeline.hpp"

#include "onm/errors.hpp"

namespace onm::improve {

policy::ActionChunk chunk_at(const env::TrajectoryRecord& record, Eigen::Index t, int horizon) {
  policy::ActionChunk chunk = policy::ActionChunk::Zero(horizon, record.actions.cols());
  for (Eigen::Index i = 0; i < horizon && t + i < record.actions.rows(); ++i)
    chunk.row(i) = record.actions.row(t + i);
  return chunk;
}

policy::ActionNormalizer fit_normalizer(const std::vector<env::TrajectoryRecord>& records,
                                        int horizon) {
  Eigen::Index rows = 0;
  for (const auto& r : records) rows += r.length();
  require(rows > 0, ErrorKind::kInput, "cannot fit a normalizer without actions");
  Eigen::MatrixXd all(rows + 1, records.front().actions.cols());
  Eigen::Index at = 0;
  for (const auto& r : records) {
    all.middleRows(at, r.length()) = r.actions;
    at += r.length();
  }
  // Chunks that run past the end of an episode carry zero displacements.
  all.row(rows).setZero();
  return policy::ActionNormalizer::fit(horizon > 1 ? all : all.topRows(rows));
}

policy::TrainingSet make_training_set(const std::vector<env::TrajectoryRecord>& records,
                                      const policy::DiffusionPolicy& policy) {
  const auto& pc = policy.config();
  Eigen::Index n = 0;
  for (const auto& r : records) n += r.length();
  require(n > 0, ErrorKind::kInput, "training set would be empty");
  policy::TrainingSet set{Eigen::MatrixXd(pc.obs_dim, n), Eigen::MatrixXd(pc.chunk_size(), n)};
  Eigen::Index col = 0;
  for (const auto& r : records) {
    require(r.observations.cols() == pc.obs_dim, ErrorKind::kShape,
            "record observation width does not match the policy");
    for (Eigen::Index t = 0; t < r.length(); ++t, ++col) {
      set.observations.col(col) = r.observations.row(t).transpose();
      set.chunks.col(col) =
          policy::flatten_chunk(policy.normalizer().normalize(chunk_at(r, t, pc.horizon)));
    }
  }
  return set;
}

policy::PolicyConfig default_policy_config(const env::EnvConfig& cfg) {
  policy::PolicyConfig pc;
  pc.obs_dim = cfg.obs_dim();
  pc.action_dim = env::EnvConfig::action_dim();
  pc.action_bound = cfg.max_step;
  return pc;
}

vib::Model initialize_model(const env::EnvConfig& env_cfg, const policy::PolicyConfig& policy_cfg,
                            const vib::VibConfig& vib_cfg, bool with_plugin,
                            const std::vector<env::TrajectoryRecord>& records, std::uint64_t seed) {
  require(!records.empty(), ErrorKind::kInput, "cannot initialize a model without demonstrations");
  require(policy_cfg.obs_dim == env_cfg.obs_dim(), ErrorKind::kConfig,
          "policy.obs_dim does not match the environment");
  nn::RngStream init(seed, "init");
  vib::Model m;
  m.env_name = env_cfg.name;
  m.policy = policy::DiffusionPolicy(policy_cfg, fit_normalizer(records, policy_cfg.horizon), init);
  if (with_plugin) m.plugin = vib::LatentPlugin(vib_cfg, policy_cfg.embed_width, init);
  m.embedding_scale = Eigen::VectorXd::Ones(policy_cfg.embed_width);
  return m;
}

std::vector<vib::LossLogEntry> train_model(
    vib::Model& model, const std::vector<env::TrajectoryRecord>& records,
    const vib::TrainingConfig& training, int iterations,
    const std::function<void(const vib::LossLogEntry&)>& on_log) {
  const auto data = make_training_set(records, model.policy);
  vib::Trainer trainer(model, training);
  auto log = trainer.train(data, iterations, on_log);
  model.embedding_scale = vib::embedding_scale(model.policy, data.observations);
  return log;
}

Eigen::MatrixXd stack_observations(const std::vector<env::TrajectoryRecord>& records) {
  Eigen::Index n = 0;
  for (const auto& r : records) n += r.observations.rows();
  require(n > 0, ErrorKind::kInput, "no observations to stack");
  Eigen::MatrixXd out(records.front().observations.cols(), n);
  Eigen::Index col = 0;
  for (const auto& r : records) {
    out.middleCols(col, r.observations.rows()) = r.observations.transpose();
    col += r.observations.rows();
  }
  return out;
}

analysis::SnrSpectrum dataset_spectrum(const vib::Model& model,
                                       const std::vector<env::TrajectoryRecord>& records) {
  if (!model.plugin) fail(ErrorKind::kConfig, "SNR needs a checkpoint with the plug-in");
  const Eigen::MatrixXd obs = stack_observations(records);
  require(obs.rows() == model.policy.config().obs_dim, ErrorKind::kShape,
          "dataset observation width does not match the checkpoint");
  const auto [mu, sigma] = model.plugin->encode_latent_batch(model.policy.encoder().forward(obs));
  return analysis::compute_snr(mu, sigma);
}

}  // namespace onm::improve

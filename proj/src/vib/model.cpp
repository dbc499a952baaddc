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

#include "onm/vib/model.hpp"

#include <cmath>
#include <cstring>

#include "onm/errors.hpp"
#include "onm/json_fields.hpp"

namespace onm::vib {

using nlohmann::json;

namespace {

std::uint64_t fnv_bytes(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void save_moments(nn::Checkpoint& ckpt, const std::string& prefix, const nn::AdamW<double>& opt) {
  ckpt.meta()["optimizer"][prefix] = opt.step_count();
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    ckpt.put("optim." + prefix + ".m" + std::to_string(i), opt.first_moments()[i]);
    ckpt.put("optim." + prefix + ".v" + std::to_string(i), opt.second_moments()[i]);
  }
}

void restore_moments(const nn::Checkpoint& ckpt, const std::string& prefix,
                     nn::AdamW<double>& opt) {
  if (!ckpt.meta().contains("optimizer") || !ckpt.meta()["optimizer"].contains(prefix)) return;
  std::vector<Eigen::MatrixXd> m, v;
  for (std::size_t i = 0; ckpt.has("optim." + prefix + ".m" + std::to_string(i)); ++i) {
    m.push_back(ckpt.get("optim." + prefix + ".m" + std::to_string(i)));
    v.push_back(ckpt.get("optim." + prefix + ".v" + std::to_string(i)));
  }
  opt.restore(ckpt.meta()["optimizer"][prefix].get<std::int64_t>(), std::move(m), std::move(v));
}

}  // namespace

std::uint64_t checksum(const nn::DenseNetd& net, std::uint64_t h) {
  for (const auto& l : net.layers()) {
    h = fnv_bytes(l.weight.data(), sizeof(double) * l.weight.size(), h);
    h = fnv_bytes(l.bias.data(), sizeof(double) * l.bias.size(), h);
  }
  return h;
}

std::uint64_t Model::base_checksum() const {
  return checksum(policy.head(), checksum(policy.encoder()));
}

std::uint64_t Model::plugin_checksum() const {
  if (!plugin) return 0;
  return checksum(plugin->latent_decoder(), checksum(plugin->latent_encoder()));
}

nn::Checkpoint Model::to_checkpoint() const {
  nn::Checkpoint ckpt;
  policy.save(ckpt);
  if (plugin) plugin->save(ckpt);
  ckpt.put("policy.embedding_scale", embedding_scale);
  ckpt.meta()["env"] = env_name;
  ckpt.meta()["train_step"] = train_step;
  ckpt.meta()["provenance"] = provenance;
  return ckpt;
}

Model Model::from_checkpoint(const nn::Checkpoint& ckpt) {
  Model m;
  m.policy = policy::DiffusionPolicy::load(ckpt);
  if (ckpt.has_namespace("plugin.")) m.plugin = LatentPlugin::load(ckpt);
  if (ckpt.has("policy.embedding_scale")) m.embedding_scale = ckpt.get("policy.embedding_scale").col(0);
  else m.embedding_scale = Eigen::VectorXd::Ones(m.policy.config().embed_width);
  m.env_name = ckpt.meta().value("env", std::string{});
  m.train_step = ckpt.meta().value("train_step", std::int64_t{0});
  m.provenance = ckpt.meta().value("provenance", json::object());
  return m;
}

Eigen::VectorXd embedding_scale(const policy::DiffusionPolicy& policy,
                                const Eigen::MatrixXd& observations) {
  require(observations.cols() >= 1, ErrorKind::kInput, "embedding_scale: no observations");
  const Eigen::MatrixXd c = policy.encoder().forward(observations);
  const Eigen::VectorXd mean = c.rowwise().mean();
  return ((c.colwise() - mean).array().square().rowwise().sum() / double(c.cols())).sqrt().matrix();
}

ActMode parse_act_mode(const std::string& name) {
  if (name == "base") return ActMode::kBase;
  if (name == "explore") return ActMode::kExplore;
  if (name == "cond-noise") return ActMode::kCondNoise;
  fail(ErrorKind::kConfig, "unknown mode '" + name + "' (expected base|explore|cond-noise)");
}

std::string to_string(ActMode mode) {
  switch (mode) {
    case ActMode::kBase: return "base";
    case ActMode::kExplore: return "explore";
    case ActMode::kCondNoise: return "cond-noise";
  }
  return "base";
}

Eigen::VectorXd sampler_noise(const Model& model, std::uint64_t episode_seed, int chunk_index) {
  nn::RngStream rng(episode_seed, "sampler", static_cast<std::uint64_t>(chunk_index));
  return rng.normal_vector(model.policy.config().chunk_size());
}

ActDecision act_with_embedding(const Model& model, const Eigen::VectorXd& embedding,
                               const Eigen::VectorXd& x_init) {
  ActDecision d;
  d.embedding = embedding;
  d.normalized = model.policy.ddim_sample_from(embedding, x_init, model.policy.config().inference_steps);
  d.actions = model.policy.to_actions(d.normalized);
  return d;
}

ActDecision act(const Model& model, const Eigen::VectorXd& observation, ActMode mode,
                double alpha, nn::RngStream& explore_rng, const Eigen::VectorXd& x_init) {
  require(alpha >= 0.0, ErrorKind::kDomain, "act: alpha must be >= 0");
  const Eigen::VectorXd c = model.policy.encode_observation(observation);
  switch (mode) {
    case ActMode::kBase:
      return act_with_embedding(model, c, x_init);
    case ActMode::kExplore: {
      if (!model.plugin) fail(ErrorKind::kConfig, "explore mode needs a checkpoint with the plug-in");
      const Exploration e = model.plugin->explore_embedding(c, alpha, explore_rng);
      ActDecision d = act_with_embedding(model, e.embedding, x_init);
      d.z = e.z;
      return d;
    }
    case ActMode::kCondNoise: {
      require(model.embedding_scale.size() == c.size(), ErrorKind::kShape,
              "embedding scale width mismatch");
      const Eigen::VectorXd noisy =
          c + alpha * model.embedding_scale.cwiseProduct(explore_rng.normal_vector(c.size()));
      return act_with_embedding(model, noisy, x_init);
    }
  }
  fail(ErrorKind::kConfig, "unhandled act mode");
}

void to_json(json& j, const TrainingConfig& c) {
  j = json{{"iterations", c.iterations},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"learning_rate", c.optimizer.learning_rate},
           {"beta1", c.optimizer.beta1},
           {"beta2", c.optimizer.beta2},
           {"epsilon", c.optimizer.epsilon},
           {"weight_decay", c.optimizer.weight_decay},
           {"use_vib", c.use_vib},
           {"log_every", c.log_every}};
}

void from_json(const json& j, TrainingConfig& c) {
  const TrainingConfig d;
  const std::string p = "training";
  c.iterations = read_field(j, "iterations", p, d.iterations);
  c.batch_size = read_field(j, "batch_size", p, d.batch_size);
  c.seed = read_field(j, "seed", p, d.seed);
  c.optimizer.learning_rate = read_field(j, "learning_rate", p, d.optimizer.learning_rate);
  c.optimizer.beta1 = read_field(j, "beta1", p, d.optimizer.beta1);
  c.optimizer.beta2 = read_field(j, "beta2", p, d.optimizer.beta2);
  c.optimizer.epsilon = read_field(j, "epsilon", p, d.optimizer.epsilon);
  c.optimizer.weight_decay = read_field(j, "weight_decay", p, d.optimizer.weight_decay);
  c.use_vib = read_field(j, "use_vib", p, d.use_vib);
  c.log_every = read_field(j, "log_every", p, d.log_every);
}

Trainer::Trainer(Model& model, TrainingConfig config)
    : model_(model),
      config_(config),
      policy_opt_(config.optimizer),
      plugin_opt_(config.optimizer),
      data_rng_(config.seed, "data", static_cast<std::uint64_t>(model.train_step)),
      imitation_rng_(config.seed, "imitation", static_cast<std::uint64_t>(model.train_step)),
      bottleneck_rng_(config.seed, "bottleneck", static_cast<std::uint64_t>(model.train_step)) {
  require(config_.batch_size >= 1, ErrorKind::kConfig, "training.batch_size must be >= 1");
  require(config_.iterations >= 0, ErrorKind::kConfig, "training.iterations must be >= 0");
}

StepLosses Trainer::joint_train_step(const policy::TrainingBatch& batch) {
  const bool with_plugin = config_.use_vib && model_.plugin.has_value();
  auto il = model_.policy.imitation_loss(batch, imitation_rng_);
  std::optional<VibLoss> ib;
  if (with_plugin) ib = model_.plugin->vib_loss(model_.policy, batch, bottleneck_rng_);

  if (!std::isfinite(il.value)) fail(ErrorKind::kNumeric, "imitation loss is not finite");
  if (ib && !std::isfinite(ib->value)) fail(ErrorKind::kNumeric, "bottleneck loss is not finite");

  policy_opt_.step(model_.policy.parameters(), il.grads.refs());
  if (ib) plugin_opt_.step(model_.plugin->parameters(), ib->grads.refs());
  ++model_.train_step;
  return {il.value, ib ? ib->value : 0.0};
}

std::vector<LossLogEntry> Trainer::train(const policy::TrainingSet& data, int iterations,
                                         const std::function<void(const LossLogEntry&)>& on_log) {
  std::vector<LossLogEntry> log;
  for (int i = 0; i < iterations; ++i) {
    const auto batch = data.sample(config_.batch_size, data_rng_);
    const StepLosses losses = joint_train_step(batch);
    const bool last = i + 1 == iterations;
    if (last || (config_.log_every > 0 && (i + 1) % config_.log_every == 0)) {
      log.push_back({model_.train_step, losses});
      if (on_log) on_log(log.back());
    }
  }
  return log;
}

void Trainer::save_optimizer_state(nn::Checkpoint& ckpt) const {
  save_moments(ckpt, "policy", policy_opt_);
  if (model_.plugin) save_moments(ckpt, "plugin", plugin_opt_);
}

void Trainer::restore_optimizer_state(const nn::Checkpoint& ckpt) {
  restore_moments(ckpt, "policy", policy_opt_);
  restore_moments(ckpt, "plugin", plugin_opt_);
}

}  // namespace onm::vib

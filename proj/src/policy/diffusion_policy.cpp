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

#include "onm/policy/diffusion_policy.hpp"

#include <cmath>

#include "onm/errors.hpp"
#include "onm/json_fields.hpp"

namespace onm::policy {

using nlohmann::json;

Eigen::VectorXd flatten_chunk(const ActionChunk& chunk) {
  Eigen::VectorXd flat(chunk.size());
  for (Eigen::Index t = 0; t < chunk.rows(); ++t)
    for (Eigen::Index a = 0; a < chunk.cols(); ++a) flat(t * chunk.cols() + a) = chunk(t, a);
  return flat;
}

ActionChunk unflatten_chunk(const Eigen::VectorXd& flat, Eigen::Index horizon,
                            Eigen::Index action_dim) {
  require(flat.size() == horizon * action_dim, ErrorKind::kShape,
          "flattened chunk length does not match H x action_dim");
  ActionChunk chunk(horizon, action_dim);
  for (Eigen::Index t = 0; t < horizon; ++t)
    for (Eigen::Index a = 0; a < action_dim; ++a) chunk(t, a) = flat(t * action_dim + a);
  return chunk;
}

void PolicyConfig::validate() const {
  require(obs_dim >= 1, ErrorKind::kConfig, "policy.obs_dim must be >= 1");
  require(action_dim >= 1, ErrorKind::kConfig, "policy.action_dim must be >= 1");
  require(horizon >= 1, ErrorKind::kConfig, "policy.horizon must be >= 1");
  require(embed_width >= 1, ErrorKind::kConfig, "policy.embed_width must be >= 1");
  require(encoder_hidden >= 1 && encoder_layers >= 0, ErrorKind::kConfig,
          "policy encoder widths must be positive");
  require(head_hidden >= 1 && head_layers >= 0, ErrorKind::kConfig,
          "policy head widths must be positive");
  require(step_code_width >= 2 && step_code_width % 2 == 0, ErrorKind::kConfig,
          "policy.step_code_width must be an even number >= 2");
  require(train_steps >= 1, ErrorKind::kConfig, "policy.train_steps must be >= 1");
  require(inference_steps >= 1 && inference_steps <= train_steps, ErrorKind::kConfig,
          "policy.inference_steps must lie in [1, train_steps]");
  require(action_bound > 0.0, ErrorKind::kConfig, "policy.action_bound must be > 0");
}

void to_json(json& j, const PolicyConfig& c) {
  j = json{{"obs_dim", c.obs_dim},
           {"action_dim", c.action_dim},
           {"horizon", c.horizon},
           {"embed_width", c.embed_width},
           {"encoder_hidden", c.encoder_hidden},
           {"encoder_layers", c.encoder_layers},
           {"head_hidden", c.head_hidden},
           {"head_layers", c.head_layers},
           {"step_code_width", c.step_code_width},
           {"train_steps", c.train_steps},
           {"inference_steps", c.inference_steps},
           {"schedule", to_string(c.schedule)},
           {"action_bound", c.action_bound}};
}

void from_json(const json& j, PolicyConfig& c) {
  PolicyConfig d;
  c.obs_dim = read_field(j, "obs_dim", "policy", d.obs_dim);
  c.action_dim = read_field(j, "action_dim", "policy", d.action_dim);
  c.horizon = read_field(j, "horizon", "policy", d.horizon);
  c.embed_width = read_field(j, "embed_width", "policy", d.embed_width);
  c.encoder_hidden = read_field(j, "encoder_hidden", "policy", d.encoder_hidden);
  c.encoder_layers = read_field(j, "encoder_layers", "policy", d.encoder_layers);
  c.head_hidden = read_field(j, "head_hidden", "policy", d.head_hidden);
  c.head_layers = read_field(j, "head_layers", "policy", d.head_layers);
  c.step_code_width = read_field(j, "step_code_width", "policy", d.step_code_width);
  c.train_steps = read_field(j, "train_steps", "policy", d.train_steps);
  c.inference_steps = read_field(j, "inference_steps", "policy", d.inference_steps);
  c.schedule = parse_schedule_kind(read_field(j, "schedule", "policy", to_string(d.schedule)));
  c.action_bound = read_field(j, "action_bound", "policy", d.action_bound);
}

ActionNormalizer ActionNormalizer::fit(const Eigen::MatrixXd& actions) {
  require(actions.rows() >= 1, ErrorKind::kInput, "cannot fit a normalizer to zero actions");
  ActionNormalizer n;
  n.lo = actions.colwise().minCoeff().transpose();
  n.hi = actions.colwise().maxCoeff().transpose();
  for (Eigen::Index i = 0; i < n.lo.size(); ++i) {
    if (n.hi(i) - n.lo(i) < 1e-9) {
      const double mid = 0.5 * (n.hi(i) + n.lo(i));
      n.lo(i) = mid - 1.0;
      n.hi(i) = mid + 1.0;
    }
  }
  return n;
}

ActionNormalizer ActionNormalizer::identity(int action_dim) {
  return {Eigen::VectorXd::Constant(action_dim, -1.0), Eigen::VectorXd::Constant(action_dim, 1.0)};
}

ActionChunk ActionNormalizer::normalize(const ActionChunk& raw) const {
  require(raw.cols() == lo.size(), ErrorKind::kShape, "normalize: action width mismatch");
  ActionChunk out(raw.rows(), raw.cols());
  for (Eigen::Index a = 0; a < raw.cols(); ++a)
    out.col(a) = 2.0 * (raw.col(a).array() - lo(a)) / (hi(a) - lo(a)) - 1.0;
  return out;
}

ActionChunk ActionNormalizer::denormalize(const ActionChunk& normalized) const {
  require(normalized.cols() == lo.size(), ErrorKind::kShape, "denormalize: action width mismatch");
  ActionChunk out(normalized.rows(), normalized.cols());
  for (Eigen::Index a = 0; a < normalized.cols(); ++a)
    out.col(a) = (normalized.col(a).array() + 1.0) * 0.5 * (hi(a) - lo(a)) + lo(a);
  return out;
}

Eigen::VectorXd step_code(int k, int width) {
  Eigen::VectorXd code(width);
  const int half = width / 2;
  for (int j = 0; j < half; ++j) {
    const double w = std::pow(100.0, -double(j) / double(half));
    code(2 * j) = std::sin(double(k) * w);
    code(2 * j + 1) = std::cos(double(k) * w);
  }
  return code;
}

TrainingBatch TrainingSet::sample(Eigen::Index batch_size, nn::RngStream& rng) const {
  require(size() >= 1, ErrorKind::kInput, "cannot sample from an empty training set");
  require(batch_size >= 1, ErrorKind::kInput, "batch size must be >= 1");
  TrainingBatch b{Eigen::MatrixXd(observations.rows(), batch_size),
                  Eigen::MatrixXd(chunks.rows(), batch_size)};
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    const auto idx = rng.uniform_int(0, size() - 1);
    b.observations.col(i) = observations.col(idx);
    b.chunks.col(i) = chunks.col(idx);
  }
  return b;
}

nn::ParamList<double> PolicyGradients::refs() {
  auto out = encoder.refs("policy.encoder");
  auto h = head.refs("policy.head");
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

DiffusionPolicy::DiffusionPolicy(PolicyConfig config, ActionNormalizer normalizer)
    : config_(config), normalizer_(std::move(normalizer)) {
  config_.validate();
  require(normalizer_.lo.size() == config_.action_dim && normalizer_.hi.size() == config_.action_dim,
          ErrorKind::kShape, "normalizer width does not match action_dim");
  schedule_ = make_schedule(config_.train_steps, config_.schedule);
  build_nets();
}

DiffusionPolicy::DiffusionPolicy(PolicyConfig config, ActionNormalizer normalizer,
                                 nn::RngStream& init_rng)
    : DiffusionPolicy(config, std::move(normalizer)) {
  encoder_ = nn::DenseNetd::kaiming_uniform(encoder_.widths(), init_rng);
  head_ = nn::DenseNetd::kaiming_uniform(head_.widths(), init_rng);
}

void DiffusionPolicy::build_nets() {
  std::vector<Eigen::Index> enc{config_.obs_dim};
  for (int i = 0; i < config_.encoder_layers; ++i) enc.push_back(config_.encoder_hidden);
  enc.push_back(config_.embed_width);
  encoder_ = nn::DenseNetd(enc);

  std::vector<Eigen::Index> head{config_.chunk_size() + config_.embed_width +
                                 config_.step_code_width};
  for (int i = 0; i < config_.head_layers; ++i) head.push_back(config_.head_hidden);
  head.push_back(config_.chunk_size());
  head_ = nn::DenseNetd(head);
}

Eigen::VectorXd DiffusionPolicy::encode_observation(const Eigen::VectorXd& obs) const {
  if (obs.size() != config_.obs_dim)
    fail(ErrorKind::kShape, "observation width " + std::to_string(obs.size()) +
                                " does not match policy obs_dim " + std::to_string(config_.obs_dim));
  return encoder_.forward(obs);
}

Eigen::MatrixXd DiffusionPolicy::head_input(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& cond,
                                            const std::vector<int>& ks) const {
  const Eigen::Index batch = noisy.cols();
  require(noisy.rows() == config_.chunk_size(), ErrorKind::kShape, "noisy chunk width mismatch");
  require(cond.rows() == config_.embed_width && cond.cols() == batch, ErrorKind::kShape,
          "conditioning embedding shape mismatch");
  require(static_cast<Eigen::Index>(ks.size()) == batch, ErrorKind::kShape,
          "one diffusion step per sample required");
  Eigen::MatrixXd x(head_.input_width(), batch);
  x.topRows(config_.chunk_size()) = noisy;
  x.middleRows(config_.chunk_size(), config_.embed_width) = cond;
  for (Eigen::Index b = 0; b < batch; ++b)
    x.col(b).tail(config_.step_code_width) = step_code(ks[b], config_.step_code_width);
  return x;
}

ActionChunk DiffusionPolicy::predict_noise(const ActionChunk& noisy_chunk,
                                           const Eigen::VectorXd& cond, int k) const {
  require(noisy_chunk.rows() == config_.horizon && noisy_chunk.cols() == config_.action_dim,
          ErrorKind::kShape, "predict_noise: chunk must be H x action_dim");
  if (k < 1 || k > config_.train_steps) fail(ErrorKind::kIndex, "predict_noise: step out of range");
  const Eigen::VectorXd x = head_input(flatten_chunk(noisy_chunk), cond, {k}).col(0);
  return unflatten_chunk(head_.forward(x), config_.horizon, config_.action_dim);
}

ActionChunk DiffusionPolicy::ddim_sample(const Eigen::VectorXd& cond, nn::RngStream& rng) const {
  return ddim_sample(cond, config_.inference_steps, rng);
}

ActionChunk DiffusionPolicy::ddim_sample(const Eigen::VectorXd& cond, int steps,
                                         nn::RngStream& rng) const {
  return ddim_sample_from(cond, rng.normal_vector(config_.chunk_size()), steps);
}

ActionChunk DiffusionPolicy::ddim_sample_from(const Eigen::VectorXd& cond,
                                              const Eigen::VectorXd& x_init, int steps) const {
  require(cond.size() == config_.embed_width, ErrorKind::kShape,
          "ddim_sample: embedding width mismatch");
  require(x_init.size() == config_.chunk_size(), ErrorKind::kShape,
          "ddim_sample: initial noise width mismatch");
  const auto ts = ddim_timesteps(config_.train_steps, steps);
  Eigen::MatrixXd x = x_init;
  Eigen::MatrixXd x0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int k = ts[i];
    const int k_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    const Eigen::VectorXd eps_hat = head_.forward(Eigen::VectorXd(head_input(x, cond, {k}).col(0)));
    x0 = ddim_update(x, eps_hat, k, k_prev, schedule_, 1.0);
  }
  return unflatten_chunk(x0.col(0), config_.horizon, config_.action_dim);
}

ActionChunk DiffusionPolicy::to_actions(const ActionChunk& normalized) const {
  return normalizer_.denormalize(normalized)
      .cwiseMax(-config_.action_bound)
      .cwiseMin(config_.action_bound);
}

PolicyGradients DiffusionPolicy::zero_gradients() const {
  return {encoder_.zero_gradients(), head_.zero_gradients()};
}

nn::ParamList<double> DiffusionPolicy::parameters() {
  auto out = encoder_.parameters("policy.encoder");
  auto h = head_.parameters("policy.head");
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

ImitationLoss DiffusionPolicy::imitation_loss(const TrainingBatch& batch, nn::RngStream& rng) const {
  const Eigen::Index n = batch.size();
  require(n >= 1, ErrorKind::kInput, "imitation_loss: empty batch");
  require(batch.observations.rows() == config_.obs_dim, ErrorKind::kShape,
          "imitation_loss: observation width mismatch");
  require(batch.chunks.rows() == config_.chunk_size() && batch.chunks.cols() == n,
          ErrorKind::kShape, "imitation_loss: chunk shape mismatch");

  std::vector<int> ks(n);
  for (auto& k : ks) k = static_cast<int>(rng.uniform_int(1, config_.train_steps));
  const Eigen::MatrixXd eps = rng.normal_matrix(config_.chunk_size(), n);

  Eigen::MatrixXd noisy(config_.chunk_size(), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const double ab = schedule_.alpha_bar(ks[b]);
    noisy.col(b) = std::sqrt(ab) * batch.chunks.col(b) + std::sqrt(1.0 - ab) * eps.col(b);
  }

  nn::DenseNetd::Tape enc_tape, head_tape;
  const Eigen::MatrixXd cond = encoder_.forward(batch.observations, enc_tape);
  const Eigen::MatrixXd eps_hat = head_.forward(head_input(noisy, cond, ks), head_tape);

  const double denom = double(config_.chunk_size()) * double(n);
  const Eigen::MatrixXd diff = eps_hat - eps;
  ImitationLoss out{diff.squaredNorm() / denom, zero_gradients()};

  const Eigen::MatrixXd d_input = head_.backward(head_tape, (2.0 / denom) * diff, &out.grads.head);
  encoder_.backward(enc_tape, d_input.middleRows(config_.chunk_size(), config_.embed_width),
                    &out.grads.encoder);
  return out;
}

void DiffusionPolicy::save(nn::Checkpoint& ckpt) const {
  ckpt.meta()["policy"] = config_;
  ckpt.put_net("policy.encoder", encoder_);
  ckpt.put_net("policy.head", head_);
  ckpt.put("policy.normalizer.lo", normalizer_.lo);
  ckpt.put("policy.normalizer.hi", normalizer_.hi);
}

DiffusionPolicy DiffusionPolicy::load(const nn::Checkpoint& ckpt) {
  if (!ckpt.meta().contains("policy"))
    fail(ErrorKind::kConfig, "checkpoint carries no policy configuration");
  const auto config = ckpt.meta()["policy"].get<PolicyConfig>();
  ActionNormalizer norm{ckpt.get("policy.normalizer.lo").col(0), ckpt.get("policy.normalizer.hi").col(0)};
  DiffusionPolicy p(config, norm);
  auto enc = ckpt.get_net("policy.encoder");
  auto head = ckpt.get_net("policy.head");
  require(enc.widths() == p.encoder_.widths() && head.widths() == p.head_.widths(),
          ErrorKind::kShape, "checkpoint network widths disagree with policy configuration");
  p.encoder_ = std::move(enc);
  p.head_ = std::move(head);
  return p;
}

}  // namespace onm::policy

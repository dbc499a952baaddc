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

#include "onm/vib/plugin.hpp"

#include <cmath>

#include "onm/errors.hpp"
#include "onm/json_fields.hpp"
#include "onm/nn/gaussian.hpp"

namespace onm::vib {

using nlohmann::json;

void VibConfig::validate() const {
  require(latent_dim >= 1, ErrorKind::kConfig, "vib.latent_dim must be >= 1");
  require(beta >= 0.0, ErrorKind::kConfig, "vib.beta must be >= 0");
  require(alpha >= 0.0, ErrorKind::kConfig, "vib.alpha must be >= 0");
  require(hidden >= 1 && layers >= 0, ErrorKind::kConfig, "vib hidden widths must be positive");
}

void to_json(json& j, const VibConfig& c) {
  j = json{{"latent_dim", c.latent_dim}, {"beta", c.beta},     {"alpha", c.alpha},
           {"hidden", c.hidden},         {"layers", c.layers}, {"threshold_db", c.threshold_db}};
}

void from_json(const json& j, VibConfig& c) {
  VibConfig d;
  c.latent_dim = read_field(j, "latent_dim", "vib", d.latent_dim);
  c.beta = read_field(j, "beta", "vib", d.beta);
  c.alpha = read_field(j, "alpha", "vib", d.alpha);
  c.hidden = read_field(j, "hidden", "vib", d.hidden);
  c.layers = read_field(j, "layers", "vib", d.layers);
  c.threshold_db = read_field(j, "threshold_db", "vib", d.threshold_db);
}

nn::ParamList<double> PluginGradients::refs() {
  auto out = latent_encoder.refs("plugin.latent_encoder");
  auto d = latent_decoder.refs("plugin.latent_decoder");
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

LatentPlugin::LatentPlugin(VibConfig config, int embed_width)
    : config_(config), embed_width_(embed_width) {
  config_.validate();
  require(embed_width_ >= 1, ErrorKind::kConfig, "plug-in embedding width must be >= 1");
  build_nets();
}

LatentPlugin::LatentPlugin(VibConfig config, int embed_width, nn::RngStream& init_rng)
    : LatentPlugin(config, embed_width) {
  encoder_ = nn::DenseNetd::kaiming_uniform(encoder_.widths(), init_rng);
  decoder_ = nn::DenseNetd::kaiming_uniform(decoder_.widths(), init_rng);
}

void LatentPlugin::build_nets() {
  std::vector<Eigen::Index> enc{embed_width_};
  std::vector<Eigen::Index> dec{config_.latent_dim};
  for (int i = 0; i < config_.layers; ++i) {
    enc.push_back(config_.hidden);
    dec.push_back(config_.hidden);
  }
  enc.push_back(2 * config_.latent_dim);
  dec.push_back(embed_width_);
  encoder_ = nn::DenseNetd(enc);
  decoder_ = nn::DenseNetd(dec);
}

LatentGaussian LatentPlugin::encode_latent(const Eigen::VectorXd& embedding) const {
  require(embedding.size() == embed_width_, ErrorKind::kShape,
          "encode_latent: embedding width mismatch");
  const Eigen::VectorXd out = encoder_.forward(embedding);
  const int d = config_.latent_dim;
  return {out.head(d),
          out.tail(d).cwiseMax(kLogSigmaMin).cwiseMin(kLogSigmaMax).array().exp().matrix()};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> LatentPlugin::encode_latent_batch(
    const Eigen::MatrixXd& embeddings) const {
  require(embeddings.rows() == embed_width_, ErrorKind::kShape,
          "encode_latent: embedding width mismatch");
  const Eigen::MatrixXd out = encoder_.forward(embeddings);
  const int d = config_.latent_dim;
  return {out.topRows(d),
          out.bottomRows(d).cwiseMax(kLogSigmaMin).cwiseMin(kLogSigmaMax).array().exp().matrix()};
}

Eigen::VectorXd LatentPlugin::decode_latent(const Eigen::VectorXd& z) const {
  if (z.size() != config_.latent_dim)
    fail(ErrorKind::kShape, "decode_latent: latent width " + std::to_string(z.size()) +
                                " does not match d = " + std::to_string(config_.latent_dim));
  return decoder_.forward(z);
}

Exploration LatentPlugin::explore_embedding(const Eigen::VectorXd& embedding, double alpha,
                                            nn::RngStream& rng) const {
  require(alpha >= 0.0, ErrorKind::kDomain, "explore_embedding: alpha must be >= 0");
  Exploration e;
  e.latent = encode_latent(embedding);
  e.z = nn::reparam_sample(e.latent.mu, e.latent.sigma, alpha, rng);
  e.embedding = decode_latent(e.z);
  return e;
}

PluginGradients LatentPlugin::zero_gradients() const {
  return {encoder_.zero_gradients(), decoder_.zero_gradients()};
}

nn::ParamList<double> LatentPlugin::parameters() {
  auto out = encoder_.parameters("plugin.latent_encoder");
  auto d = decoder_.parameters("plugin.latent_decoder");
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

VibLoss LatentPlugin::vib_loss(const policy::DiffusionPolicy& base,
                               const policy::TrainingBatch& batch, nn::RngStream& rng) const {
  const Eigen::Index n = batch.size();
  require(n >= 1, ErrorKind::kInput, "vib_loss: empty batch");
  const auto& pc = base.config();
  require(pc.embed_width == embed_width_, ErrorKind::kShape,
          "vib_loss: base embedding width does not match plug-in");
  require(batch.observations.rows() == pc.obs_dim && batch.chunks.rows() == pc.chunk_size() &&
              batch.chunks.cols() == n,
          ErrorKind::kShape, "vib_loss: batch shape mismatch");
  const int d = config_.latent_dim;

  // Detached: no tape, so nothing flows back into the observation encoder.
  const Eigen::MatrixXd cond = base.encoder().forward(batch.observations);

  nn::DenseNetd::Tape enc_tape, dec_tape, head_tape;
  const Eigen::MatrixXd stats = encoder_.forward(cond, enc_tape);
  const Eigen::MatrixXd mu = stats.topRows(d);
  const Eigen::MatrixXd log_sigma_raw = stats.bottomRows(d);
  const Eigen::MatrixXd log_sigma = log_sigma_raw.cwiseMax(kLogSigmaMin).cwiseMin(kLogSigmaMax);
  const Eigen::MatrixXd sigma = log_sigma.array().exp().matrix();

  const Eigen::MatrixXd eps_z = rng.normal_matrix(d, n);
  const Eigen::MatrixXd z = mu + sigma.cwiseProduct(eps_z);
  const Eigen::MatrixXd cond_tilde = decoder_.forward(z, dec_tape);

  std::vector<int> ks(n);
  for (auto& k : ks) k = static_cast<int>(rng.uniform_int(1, pc.train_steps));
  const Eigen::MatrixXd eps = rng.normal_matrix(pc.chunk_size(), n);
  Eigen::MatrixXd noisy(pc.chunk_size(), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const double ab = base.schedule().alpha_bar(ks[b]);
    noisy.col(b) = std::sqrt(ab) * batch.chunks.col(b) + std::sqrt(1.0 - ab) * eps.col(b);
  }
  const Eigen::MatrixXd eps_hat = base.head().forward(base.head_input(noisy, cond_tilde, ks), head_tape);

  const double denom = double(pc.chunk_size()) * double(n);
  const Eigen::MatrixXd diff = eps_hat - eps;

  VibLoss out;
  out.grads = zero_gradients();
  out.base_grads = base.zero_gradients();
  out.reconstruction = diff.squaredNorm() / denom;
  const Eigen::ArrayXd kl_per_sample =
      0.5 * (mu.array().square() + sigma.array().square() - 1.0 - 2.0 * log_sigma.array())
                .colwise()
                .sum()
                .transpose();
  out.kl = kl_per_sample.mean();
  out.value = out.reconstruction + config_.beta * out.kl;

  // Head parameters are frozen here: only the input gradient is propagated.
  const Eigen::MatrixXd d_input = base.head().backward(head_tape, (2.0 / denom) * diff, nullptr);
  const Eigen::MatrixXd d_cond_tilde = d_input.middleRows(pc.chunk_size(), pc.embed_width);
  const Eigen::MatrixXd d_z = decoder_.backward(dec_tape, d_cond_tilde, &out.grads.latent_decoder);

  const double kl_scale = config_.beta / double(n);
  Eigen::MatrixXd d_stats(2 * d, n);
  d_stats.topRows(d) = d_z + kl_scale * mu;
  Eigen::MatrixXd d_log_sigma = d_z.cwiseProduct(sigma).cwiseProduct(eps_z) +
                                kl_scale * (sigma.array().square() - 1.0).matrix();
  d_log_sigma = (log_sigma_raw.array() < kLogSigmaMin || log_sigma_raw.array() > kLogSigmaMax)
                    .select(0.0, d_log_sigma);
  d_stats.bottomRows(d) = d_log_sigma;
  encoder_.backward(enc_tape, d_stats, &out.grads.latent_encoder);
  return out;
}

void LatentPlugin::save(nn::Checkpoint& ckpt) const {
  ckpt.meta()["plugin"] = config_;
  ckpt.meta()["plugin"]["embed_width"] = embed_width_;
  ckpt.put_net("plugin.latent_encoder", encoder_);
  ckpt.put_net("plugin.latent_decoder", decoder_);
}

LatentPlugin LatentPlugin::load(const nn::Checkpoint& ckpt) {
  if (!ckpt.meta().contains("plugin"))
    fail(ErrorKind::kNotFound, "checkpoint carries no exploration plug-in");
  const auto& meta = ckpt.meta()["plugin"];
  LatentPlugin p(meta.get<VibConfig>(), meta.at("embed_width").get<int>());
  auto enc = ckpt.get_net("plugin.latent_encoder");
  auto dec = ckpt.get_net("plugin.latent_decoder");
  require(enc.widths() == p.encoder_.widths() && dec.widths() == p.decoder_.widths(),
          ErrorKind::kShape, "checkpoint plug-in widths disagree with its configuration");
  p.encoder_ = std::move(enc);
  p.decoder_ = std::move(dec);
  return p;
}

}  // namespace onm::vib

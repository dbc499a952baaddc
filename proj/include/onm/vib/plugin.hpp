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

#ifndef ONM_VIB_PLUGIN_HPP_
#define ONM_VIB_PLUGIN_HPP_

#include <Eigen/Core>
#include "json.hpp"

#include "onm/nn/checkpoint.hpp"
#include "onm/nn/dense_net.hpp"
#include "onm/nn/rng.hpp"
#include "onm/policy/diffusion_policy.hpp"

namespace onm::vib {

struct VibConfig {
  int latent_dim = 16;
  double beta = 0.001;
  double alpha = 2.0;
  int hidden = 128;
  int layers = 3;
  double threshold_db = 0.0;

  void validate() const;
  /// Default exploration settings (alpha 2.0, beta 0.001).
  static VibConfig standard() { return {}; }
  /// Conservative preset used on real hardware: alpha 1.0.
  static VibConfig conservative() {
    VibConfig c;
    c.alpha = 1.0;
    return c;
  }
};

void to_json(nlohmann::json& j, const VibConfig& c);
void from_json(const nlohmann::json& j, VibConfig& c);

/// Diagonal Gaussian over the latent bottleneck.
struct LatentGaussian {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

struct Exploration {
  Eigen::VectorXd embedding;  // decoded, modified embedding
  Eigen::VectorXd z;
  LatentGaussian latent;
};

struct PluginGradients {
  nn::DenseNetd::Gradients latent_encoder;
  nn::DenseNetd::Gradients latent_decoder;

  double max_abs() const { return std::max(latent_encoder.max_abs(), latent_decoder.max_abs()); }
  nn::ParamList<double> refs();
};

struct VibLoss {
  double value = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;  // batch mean of the per-sample KL (summed over latent dims)
  PluginGradients grads;
  /// Gradient buffer for the base policy; stays exactly zero.
  policy::PolicyGradients base_grads;
};

/// Log-sigma clamp range, i.e. sigma in [1e-6, 1e3].
inline constexpr double kLogSigmaMin = -13.815510557964274;  // ln(1e-6)
inline constexpr double kLogSigmaMax = 6.907755278982137;    // ln(1e3)

/// Latent encoder / decoder pair wrapped around the observation embedding.
///
/// The encoder emits [mu; log sigma] (2d rows). Exploration samples
/// z ~ N(mu, (alpha sigma)^2) and decodes it into a modified embedding that
/// conditions the unchanged noise head.
class LatentPlugin {
 public:
  LatentPlugin() = default;
  /// Zero-initialized (mu = 0, sigma = 1, decoder output 0).
  LatentPlugin(VibConfig config, int embed_width);
  LatentPlugin(VibConfig config, int embed_width, nn::RngStream& init_rng);

  const VibConfig& config() const { return config_; }
  VibConfig& config() { return config_; }
  int latent_dim() const { return config_.latent_dim; }
  int embed_width() const { return embed_width_; }

  nn::DenseNetd& latent_encoder() { return encoder_; }
  const nn::DenseNetd& latent_encoder() const { return encoder_; }
  nn::DenseNetd& latent_decoder() { return decoder_; }
  const nn::DenseNetd& latent_decoder() const { return decoder_; }

  LatentGaussian encode_latent(const Eigen::VectorXd& embedding) const;
  /// Batched encode, one embedding per column; returns (mu, sigma) as d x B.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> encode_latent_batch(const Eigen::MatrixXd& embeddings) const;
  Eigen::VectorXd decode_latent(const Eigen::VectorXd& z) const;

  Exploration explore_embedding(const Eigen::VectorXd& embedding, double alpha,
                                nn::RngStream& rng) const;

  /// Reconstruction through the frozen base head plus beta-weighted KL to
  /// N(0, I). Gradients reach only the latent encoder and decoder: the
  /// embedding is detached before the encoder, and the head contributes only
  /// its input gradient. Draw order from `rng`: latent noise (d x B column by
  /// column), one diffusion step per sample, then the action-noise matrix.
  VibLoss vib_loss(const policy::DiffusionPolicy& base, const policy::TrainingBatch& batch,
                   nn::RngStream& rng) const;

  PluginGradients zero_gradients() const;
  nn::ParamList<double> parameters();

  void save(nn::Checkpoint& ckpt) const;
  static LatentPlugin load(const nn::Checkpoint& ckpt);

 private:
  void build_nets();

  VibConfig config_;
  int embed_width_ = 0;
  nn::DenseNetd encoder_;
  nn::DenseNetd decoder_;
};

}  // namespace onm::vib

#endif  // ONM_VIB_PLUGIN_HPP_

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

#include "onm/analysis/proposals.hpp"

#include "onm/analysis/metrics.hpp"
#include "onm/errors.hpp"
#include "onm/json_eigen.hpp"

namespace onm::analysis {

std::vector<double> proposal_offsets(int batch, double span) {
  require(batch >= 1, ErrorKind::kInput, "proposal batch must be >= 1");
  std::vector<double> out(batch, 0.0);
  if (batch == 1) return out;
  for (int i = 0; i < batch; ++i) out[i] = -span + 2.0 * span * double(i) / double(batch - 1);
  return out;
}

Eigen::MatrixXd simulate_chunk(const env::EnvConfig& cfg, const env::EnvState& state,
                               const policy::ActionChunk& chunk) {
  Eigen::MatrixXd traj(chunk.rows(), 2);
  env::EnvState s = state;
  bool done = false;
  for (Eigen::Index t = 0; t < chunk.rows(); ++t) {
    if (!done) {
      const auto r = env::step(cfg, s, chunk.row(t).transpose());
      s = r.state;
      done = r.done;
    }
    traj.row(t) = s.robot.transpose();
  }
  return traj;
}

Eigen::Index fps_start_index(const std::vector<Eigen::MatrixXd>& trajectories) {
  require(!trajectories.empty(), ErrorKind::kInput, "no trajectories");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& t : trajectories) mean += t.row(t.rows() - 1).transpose();
  mean /= double(trajectories.size());
  Eigen::Index best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    const double d = (t.row(t.rows() - 1).transpose() - mean).norm();
    if (d > best_d) {
      best_d = d;
      best = static_cast<Eigen::Index>(i);
    }
  }
  return best;
}

ProposalSet propose_along_dimension(const vib::Model& model, const env::EnvConfig& cfg,
                                    const env::EnvState& state, const ProposalRequest& request,
                                    const Eigen::VectorXd& x_init) {
  if (!model.plugin) fail(ErrorKind::kConfig, "proposals need a checkpoint with the plug-in");
  const auto& plugin = *model.plugin;
  if (request.dim < 0 || request.dim >= plugin.latent_dim())
    fail(ErrorKind::kIndex, "latent dimension " + std::to_string(request.dim) + " outside [0, " +
                                std::to_string(plugin.latent_dim()) + ")");
  require(request.k >= 1, ErrorKind::kInput, "proposal k must be >= 1");
  require(request.batch >= request.k, ErrorKind::kInput, "proposal batch must be >= k");
  require(request.span >= 0.0, ErrorKind::kInput, "proposal span must be >= 0");

  const Eigen::VectorXd c = model.policy.encode_observation(env::observe(cfg, state));
  const vib::LatentGaussian latent = plugin.encode_latent(c);
  const auto offsets = proposal_offsets(request.batch, request.span);

  std::vector<Proposal> candidates(request.batch);
  std::vector<Eigen::MatrixXd> trajectories(request.batch);
  Eigen::MatrixXd flat(2 * model.policy.config().horizon, request.batch);
  for (int i = 0; i < request.batch; ++i) {
    Proposal& p = candidates[i];
    p.id = i;
    p.offset = offsets[i];
    p.z = latent.mu;
    p.z(request.dim) += offsets[i] * latent.sigma(request.dim);
    p.chunk = vib::act_with_embedding(model, plugin.decode_latent(p.z), x_init).actions;
    p.trajectory = simulate_chunk(cfg, state, p.chunk);
    trajectories[i] = p.trajectory;
    flat.col(i) = policy::flatten_chunk(p.trajectory);
  }

  const auto order = farthest_point_sampling(flat, request.k, fps_start_index(trajectories));
  ProposalSet set;
  set.dim = request.dim;
  for (auto idx : order) set.proposals.push_back(std::move(candidates[idx]));
  return set;
}

void to_json(nlohmann::json& j, const ProposalSet& set) {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : set.proposals)
    props.push_back({{"id", p.id},
                     {"offset", p.offset},
                     {"z", json_vector(p.z)},
                     {"chunk", json_rows(p.chunk)},
                     {"trajectory", json_rows(p.trajectory)}});
  j = nlohmann::json{{"dim", set.dim}, {"proposals", std::move(props)}};
}

}  // namespace onm::analysis

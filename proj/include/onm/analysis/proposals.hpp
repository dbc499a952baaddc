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

#ifndef ONM_ANALYSIS_PROPOSALS_HPP_
#define ONM_ANALYSIS_PROPOSALS_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/env/planar.hpp"
#include "onm/vib/model.hpp"

namespace onm::analysis {

struct Proposal {
  int id = 0;
  double offset = 0.0;  // multiple of sigma[dim] added to mu[dim]
  Eigen::VectorXd z;
  policy::ActionChunk chunk;   // raw displacements
  Eigen::MatrixXd trajectory;  // H x 2 robot positions after each step
};

struct ProposalSet {
  int dim = 0;
  std::vector<Proposal> proposals;  // FPS order
};

/// {dim, proposals: [{id, offset, z, chunk, trajectory}]}
void to_json(nlohmann::json& j, const ProposalSet& set);

struct ProposalRequest {
  int dim = 0;
  int batch = 64;
  int k = 8;
  double span = 3.0;
};

/// Evenly spaced offsets in [-span, span] (a single zero offset when batch = 1).
std::vector<double> proposal_offsets(int batch, double span);

/// Forward-simulates `chunk` on a copy of `state`; positions after each
/// step, held constant once the episode ends.
Eigen::MatrixXd simulate_chunk(const env::EnvConfig& cfg, const env::EnvState& state,
                               const policy::ActionChunk& chunk);

/// FPS start rule: the candidate whose final position is farthest from the
/// mean final position (lowest index on ties).
Eigen::Index fps_start_index(const std::vector<Eigen::MatrixXd>& trajectories);

/// Perturbs latent dimension `dim` around mu at the current observation,
/// decodes and simulates every candidate, then keeps k of them by farthest
/// point sampling over flattened trajectories. Every candidate shares the
/// DDIM initial noise `x_init`. Proposal ids are candidate indices.
ProposalSet propose_along_dimension(const vib::Model& model, const env::EnvConfig& cfg,
                                    const env::EnvState& state, const ProposalRequest& request,
                                    const Eigen::VectorXd& x_init);

}  // namespace onm::analysis

#endif  // ONM_ANALYSIS_PROPOSALS_HPP_

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

#ifndef ONM_IMPROVE_PIPELINE_HPP_
#define ONM_IMPROVE_PIPELINE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"

#include "onm/analysis/metrics.hpp"
#include "onm/env/dataset.hpp"
#include "onm/policy/diffusion_policy.hpp"
#include "onm/vib/model.hpp"
#include "onm/vib/plugin.hpp"

namespace onm::improve {

/// Raw H-step chunk starting at step t of a record; steps past the end are
/// zero displacements.
policy::ActionChunk chunk_at(const env::TrajectoryRecord& record, Eigen::Index t, int horizon);

/// Normalizer fitted to every chunk entry (including end padding).
policy::ActionNormalizer fit_normalizer(const std::vector<env::TrajectoryRecord>& records,
                                        int horizon);

/// One column per (record, time step).
policy::TrainingSet make_training_set(const std::vector<env::TrajectoryRecord>& records,
                                      const policy::DiffusionPolicy& policy);

/// Policy architecture for an environment with defaults everywhere else.
policy::PolicyConfig default_policy_config(const env::EnvConfig& cfg);

/// Fresh model for `records`: fitted normalizer, Kaiming init from the
/// "init" stream of `seed`, plug-in included when `with_plugin`.
vib::Model initialize_model(const env::EnvConfig& env_cfg, const policy::PolicyConfig& policy_cfg,
                            const vib::VibConfig& vib_cfg, bool with_plugin,
                            const std::vector<env::TrajectoryRecord>& records, std::uint64_t seed);

/// Runs `iterations` joint training steps on `records` and refreshes the
/// embedding scale. Returns the loss log.
std::vector<vib::LossLogEntry> train_model(
    vib::Model& model, const std::vector<env::TrajectoryRecord>& records,
    const vib::TrainingConfig& training, int iterations,
    const std::function<void(const vib::LossLogEntry&)>& on_log = {});

/// Stacks every recorded observation as a column.
Eigen::MatrixXd stack_observations(const std::vector<env::TrajectoryRecord>& records);

/// SNR of the plug-in's latent Gaussians over every observation in `records`.
analysis::SnrSpectrum dataset_spectrum(const vib::Model& model,
                                       const std::vector<env::TrajectoryRecord>& records);

}  // namespace onm::improve

#endif  // ONM_IMPROVE_PIPELINE_HPP_

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

#ifndef ONM_ANALYSIS_METRICS_HPP_
#define ONM_ANALYSIS_METRICS_HPP_

#include <cstddef>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/vib/plugin.hpp"

namespace onm::analysis {

/// dB value stored for a zero ratio.
inline constexpr double kSnrFloorDb = -300.0;

struct SnrSpectrum {
  Eigen::VectorXd ratio;  // Var(mu_i) / E[sigma_i^2]
  Eigen::VectorXd db;     // 10 log10(ratio), kSnrFloorDb when ratio == 0
  std::size_t samples = 0;

  Eigen::Index dims() const { return ratio.size(); }
};

/// Per-dimension SNR from latent Gaussians; population variance of mu over
/// mean sigma^2. Needs at least two samples.
SnrSpectrum compute_snr(const std::vector<vib::LatentGaussian>& samples);
/// Same, with mu and sigma given as d x N matrices.
SnrSpectrum compute_snr(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& sigma);

double ratio_to_db(double ratio);

/// Indices whose SNR in dB exceeds `threshold_db`, ascending.
std::vector<int> effective_dimensions(const SnrSpectrum& spectrum, double threshold_db = 0.0);

/// All indices sorted by dB descending; ties keep ascending index order.
std::vector<int> rank_dimensions(const SnrSpectrum& spectrum);

/// {dims: [{index, snr, snr_db, effective}], threshold_db, samples}
nlohmann::json snr_report(const SnrSpectrum& spectrum, double threshold_db);
SnrSpectrum spectrum_from_report(const nlohmann::json& report);

/// Greedy max-min subset of the columns of `points`. The first pick is
/// `start`; each later pick maximizes the Euclidean distance to its nearest
/// already-picked point, ties going to the lowest index.
std::vector<Eigen::Index> farthest_point_sampling(const Eigen::MatrixXd& points, Eigen::Index k,
                                                  Eigen::Index start);

/// Mean norm of the third forward difference (p[t+3] - 3p[t+2] + 3p[t+1] - p[t]) / dt^3
/// over the T - 3 valid indices. Rows of `positions` are time steps.
double average_jerk(const Eigen::MatrixXd& positions, double dt);

/// Fraction of starts with at least one success among their first k attempts.
double pass_at_k(const std::vector<std::vector<bool>>& outcomes, int k);

}  // namespace onm::analysis

#endif  // ONM_ANALYSIS_METRICS_HPP_

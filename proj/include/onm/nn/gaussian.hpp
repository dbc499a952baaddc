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

#ifndef ONM_NN_GAUSSIAN_HPP_
#define ONM_NN_GAUSSIAN_HPP_

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "onm/errors.hpp"
#include "onm/nn/rng.hpp"

namespace onm::nn {

/// Lower clamp applied to sigma before taking its log.
inline constexpr double kSigmaFloor = 1e-6;

/// KL( N(mu, diag(sigma^2)) || N(0, I) ), summed over dimensions:
///   0.5 * sum(mu^2 + sigma^2 - 1 - ln sigma^2).
template <typename DerivedMu, typename DerivedSigma>
typename DerivedMu::Scalar kl_diag_gaussian_to_standard(
    const Eigen::MatrixBase<DerivedMu>& mu, const Eigen::MatrixBase<DerivedSigma>& sigma) {
  using Scalar = typename DerivedMu::Scalar;
  require(mu.size() == sigma.size(), ErrorKind::kShape, "KL: mu and sigma widths differ");
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const Scalar s = sigma.derived().coeff(i);
    if (!(s > Scalar(0))) fail(ErrorKind::kDomain, "KL: sigma must be strictly positive");
    const Scalar sc = std::max(s, Scalar(kSigmaFloor));
    const Scalar m = mu.derived().coeff(i);
    kl += m * m + sc * sc - Scalar(1) - Scalar(2) * std::log(sc);
  }
  return Scalar(0.5) * kl;
}

/// z = mu + alpha * sigma (.) eps with eps drawn from `rng`.
template <typename DerivedMu, typename DerivedSigma>
Eigen::Matrix<typename DerivedMu::Scalar, Eigen::Dynamic, 1> reparam_sample(
    const Eigen::MatrixBase<DerivedMu>& mu, const Eigen::MatrixBase<DerivedSigma>& sigma,
    double alpha, RngStream& rng) {
  using Scalar = typename DerivedMu::Scalar;
  require(alpha >= 0.0, ErrorKind::kDomain, "reparam_sample: alpha must be >= 0");
  require(mu.size() == sigma.size(), ErrorKind::kShape,
          "reparam_sample: mu and sigma widths differ");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    z(i) = mu.derived().coeff(i) +
           Scalar(alpha) * sigma.derived().coeff(i) * Scalar(rng.normal());
  return z;
}

}  // namespace onm::nn

#endif  // ONM_NN_GAUSSIAN_HPP_

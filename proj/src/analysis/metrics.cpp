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

#include "onm/analysis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "onm/errors.hpp"

namespace onm::analysis {

using nlohmann::json;

double ratio_to_db(double ratio) {
  if (!(ratio > 0.0)) return kSnrFloorDb;
  return std::max(10.0 * std::log10(ratio), kSnrFloorDb);
}

SnrSpectrum compute_snr(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& sigma) {
  require(mu.rows() == sigma.rows() && mu.cols() == sigma.cols(), ErrorKind::kShape,
          "compute_snr: mu and sigma shapes differ");
  require(mu.cols() >= 2, ErrorKind::kInput, "compute_snr needs at least 2 samples");
  const Eigen::Index d = mu.rows();
  // Welford running moments per dimension.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sigma2 = Eigen::VectorXd::Zero(d);
  for (Eigen::Index n = 0; n < mu.cols(); ++n) {
    const Eigen::VectorXd delta = mu.col(n) - mean;
    mean += delta / double(n + 1);
    m2 += delta.cwiseProduct(mu.col(n) - mean);
    sigma2 += (sigma.col(n).cwiseAbs2() - sigma2) / double(n + 1);
  }
  SnrSpectrum s;
  s.samples = static_cast<std::size_t>(mu.cols());
  s.ratio.resize(d);
  s.db.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double var = m2(i) / double(mu.cols());
    s.ratio(i) = sigma2(i) > 0.0 ? var / sigma2(i)
                 : var > 0.0     ? std::numeric_limits<double>::infinity()
                                 : 0.0;
    s.db(i) = std::isinf(s.ratio(i)) ? -kSnrFloorDb : ratio_to_db(s.ratio(i));
  }
  return s;
}

SnrSpectrum compute_snr(const std::vector<vib::LatentGaussian>& samples) {
  require(samples.size() >= 2, ErrorKind::kInput, "compute_snr needs at least 2 samples");
  const Eigen::Index d = samples.front().mu.size();
  Eigen::MatrixXd mu(d, samples.size()), sigma(d, samples.size());
  for (std::size_t n = 0; n < samples.size(); ++n) {
    require(samples[n].mu.size() == d && samples[n].sigma.size() == d, ErrorKind::kShape,
            "compute_snr: inconsistent latent widths");
    mu.col(n) = samples[n].mu;
    sigma.col(n) = samples[n].sigma;
  }
  return compute_snr(mu, sigma);
}

std::vector<int> effective_dimensions(const SnrSpectrum& spectrum, double threshold_db) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < spectrum.db.size(); ++i)
    if (spectrum.db(i) > threshold_db) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> rank_dimensions(const SnrSpectrum& spectrum) {
  std::vector<int> order(spectrum.db.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return spectrum.db(a) > spectrum.db(b); });
  return order;
}

json snr_report(const SnrSpectrum& spectrum, double threshold_db) {
  json dims = json::array();
  for (Eigen::Index i = 0; i < spectrum.dims(); ++i) {
    dims.push_back({{"index", i},
                    {"snr", std::isinf(spectrum.ratio(i)) ? json(nullptr) : json(spectrum.ratio(i))},
                    {"snr_db", spectrum.db(i)},
                    {"effective", spectrum.db(i) > threshold_db}});
  }
  return {{"dims", dims}, {"threshold_db", threshold_db}, {"samples", spectrum.samples}};
}

SnrSpectrum spectrum_from_report(const json& report) {
  const auto& dims = report.at("dims");
  SnrSpectrum s;
  s.samples = report.value("samples", std::size_t{0});
  s.ratio.resize(dims.size());
  s.db.resize(dims.size());
  for (const auto& d : dims) {
    const auto i = d.at("index").get<Eigen::Index>();
    require(i >= 0 && i < s.ratio.size(), ErrorKind::kInput, "SNR report index out of range");
    s.ratio(i) = d.at("snr").is_null() ? std::numeric_limits<double>::infinity()
                                       : d.at("snr").get<double>();
    s.db(i) = d.at("snr_db").get<double>();
  }
  return s;
}

std::vector<Eigen::Index> farthest_point_sampling(const Eigen::MatrixXd& points, Eigen::Index k,
                                                  Eigen::Index start) {
  const Eigen::Index n = points.cols();
  if (k < 1 || k > n)
    fail(ErrorKind::kInput, "farthest_point_sampling: k must lie in [1, " + std::to_string(n) + "]");
  if (start < 0 || start >= n) fail(ErrorKind::kIndex, "farthest_point_sampling: bad start index");

  std::vector<Eigen::Index> picked{start};
  std::vector<bool> taken(n, false);
  taken[start] = true;
  Eigen::VectorXd nearest(n);
  for (Eigen::Index i = 0; i < n; ++i) nearest(i) = (points.col(i) - points.col(start)).norm();

  while (static_cast<Eigen::Index>(picked.size()) < k) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best < 0 || nearest(i) > nearest(best)) best = i;
    }
    picked.push_back(best);
    taken[best] = true;
    for (Eigen::Index i = 0; i < n; ++i)
      nearest(i) = std::min(nearest(i), (points.col(i) - points.col(best)).norm());
  }
  return picked;
}

double average_jerk(const Eigen::MatrixXd& positions, double dt) {
  const Eigen::Index t = positions.rows();
  require(t >= 4, ErrorKind::kInput, "average_jerk needs at least 4 positions");
  require(dt > 0.0, ErrorKind::kDomain, "average_jerk: dt must be > 0");
  const double scale = 1.0 / (dt * dt * dt);
  double total = 0.0;
  for (Eigen::Index i = 0; i + 3 < t; ++i) {
    const Eigen::RowVectorXd d3 = positions.row(i + 3) - 3.0 * positions.row(i + 2) +
                                  3.0 * positions.row(i + 1) - positions.row(i);
    total += d3.norm() * scale;
  }
  return total / double(t - 3);
}

double pass_at_k(const std::vector<std::vector<bool>>& outcomes, int k) {
  require(k >= 1, ErrorKind::kInput, "pass_at_k: k must be >= 1");
  require(!outcomes.empty(), ErrorKind::kInput, "pass_at_k: no start conditions");
  std::size_t hits = 0;
  for (const auto& attempts : outcomes) {
    if (static_cast<int>(attempts.size()) < k)
      fail(ErrorKind::kInput, "pass_at_k: a start has fewer than k attempts");
    if (std::any_of(attempts.begin(), attempts.begin() + k, [](bool b) { return b; })) ++hits;
  }
  return double(hits) / double(outcomes.size());
}

}  // namespace onm::analysis

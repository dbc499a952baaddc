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

#ifndef ONM_NN_ADAMW_HPP_
#define ONM_NN_ADAMW_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "onm/errors.hpp"
#include "onm/nn/dense_net.hpp"

namespace onm::nn {

struct AdamWConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-6;
};

/// Adam with decoupled weight decay.
///
/// Each step first shrinks every parameter by (1 - lr * wd), then applies the
/// bias-corrected adaptive update. Moments are bound to parameters by position
/// in the list passed to step(); the list layout must stay fixed.
template <typename Scalar>
class AdamW {
 public:
  using Matrix = MatrixX<Scalar>;

  AdamW() = default;
  explicit AdamW(AdamWConfig config) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

  /// Restores a saved state; shapes are checked on the next step().
  void restore(std::int64_t step, std::vector<Matrix> m, std::vector<Matrix> v) {
    require(step >= 0 && m.size() == v.size(), ErrorKind::kState, "invalid AdamW state");
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  void step(const ParamList<Scalar>& params, const ParamList<Scalar>& grads) {
    require(params.size() == grads.size(), ErrorKind::kShape,
            "AdamW: parameter and gradient lists differ in length");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require(params[i].rows == grads[i].rows && params[i].cols == grads[i].cols,
              ErrorKind::kShape, "AdamW: gradient shape mismatch for " + params[i].name);
      if (!grads[i].map().allFinite())
        fail(ErrorKind::kNumeric, "AdamW: non-finite gradient for parameter " + params[i].name);
    }
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.rows, p.cols));
        v_.push_back(Matrix::Zero(p.rows, p.cols));
      }
    }
    require(m_.size() == params.size(), ErrorKind::kShape,
            "AdamW: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i)
      require(m_[i].rows() == params[i].rows && m_[i].cols() == params[i].cols,
              ErrorKind::kShape, "AdamW: moment shape mismatch for " + params[i].name);

    ++step_;
    const Scalar lr = Scalar(config_.learning_rate);
    const Scalar b1 = Scalar(config_.beta1);
    const Scalar b2 = Scalar(config_.beta2);
    const Scalar eps = Scalar(config_.epsilon);
    const Scalar decay = Scalar(1) - lr * Scalar(config_.weight_decay);
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(step_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(step_));

    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].map();
      const auto g = grads[i].map();
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      p *= decay;
      p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
      if (!p.allFinite())
        fail(ErrorKind::kNumeric, "AdamW: parameter " + params[i].name + " became non-finite");
    }
  }

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace onm::nn

#endif  // ONM_NN_ADAMW_HPP_

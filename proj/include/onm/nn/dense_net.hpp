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

#ifndef ONM_NN_DENSE_NET_HPP_
#define ONM_NN_DENSE_NET_HPP_

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "onm/errors.hpp"
#include "onm/nn/rng.hpp"

namespace onm::nn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Non-owning view of one parameter (or gradient) array, addressed by name.
template <typename Scalar>
struct ParamRef {
  std::string name;
  Scalar* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Map<MatrixX<Scalar>> map() const {
    return Eigen::Map<MatrixX<Scalar>>(data, rows, cols);
  }
  Eigen::Index size() const { return rows * cols; }
};

template <typename Scalar>
using ParamList = std::vector<ParamRef<Scalar>>;

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// Batched calls take one sample per column. The network itself is never
/// mutated by a forward or backward pass; activations needed for the gradient
/// are written to a caller-owned Tape, so a const network can serve many
/// threads at once.
template <typename Scalar>
class DenseNet {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };

  /// Post-activation values of every layer input, recorded by forward().
  struct Tape {
    std::vector<Matrix> inputs;
    bool recorded = false;
  };

  /// Parameter-shaped accumulator.
  struct Gradients {
    std::vector<Layer> layers;

    void set_zero() {
      for (auto& l : layers) {
        l.weight.setZero();
        l.bias.setZero();
      }
    }
    Scalar max_abs() const {
      Scalar m = 0;
      for (const auto& l : layers) {
        if (l.weight.size()) m = std::max(m, l.weight.cwiseAbs().maxCoeff());
        if (l.bias.size()) m = std::max(m, l.bias.cwiseAbs().maxCoeff());
      }
      return m;
    }
    ParamList<Scalar> refs(const std::string& prefix) {
      return DenseNet::make_refs(layers, prefix);
    }
  };

  DenseNet() = default;

  /// Zero-initialized network with the given layer widths (input first).
  explicit DenseNet(std::vector<Eigen::Index> widths) : widths_(std::move(widths)) {
    require(widths_.size() >= 2, ErrorKind::kConfig,
            "DenseNet needs at least an input and an output width");
    for (auto w : widths_)
      require(w > 0, ErrorKind::kConfig, "DenseNet widths must be positive");
    layers_.resize(widths_.size() - 1);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      layers_[l].weight = Matrix::Zero(widths_[l + 1], widths_[l]);
      layers_[l].bias = Vector::Zero(widths_[l + 1]);
    }
  }

  /// Kaiming-style uniform init: U(-b, b) with b = sqrt(6 / fan_in) for
  /// hidden layers and sqrt(1 / fan_in) for the output layer; biases zero.
  static DenseNet kaiming_uniform(std::vector<Eigen::Index> widths, RngStream& rng) {
    DenseNet net(std::move(widths));
    for (std::size_t l = 0; l < net.layers_.size(); ++l) {
      auto& layer = net.layers_[l];
      const double fan_in = static_cast<double>(layer.weight.cols());
      const bool last = l + 1 == net.layers_.size();
      const double bound = std::sqrt((last ? 1.0 : 6.0) / fan_in);
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
          layer.weight(i, j) = Scalar(rng.uniform(-bound, bound));
    }
    return net;
  }

  const std::vector<Eigen::Index>& widths() const { return widths_; }
  Eigen::Index input_width() const { return widths_.front(); }
  Eigen::Index output_width() const { return widths_.back(); }
  std::size_t depth() const { return layers_.size(); }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  Gradients zero_gradients() const {
    Gradients g;
    g.layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      g.layers[l].weight = Matrix::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
      g.layers[l].bias = Vector::Zero(layers_[l].bias.size());
    }
    return g;
  }

  /// Batched forward pass without recording.
  Matrix forward(const Matrix& x) const {
    check_input(x.rows());
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weight * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  Vector forward(const Vector& x) const {
    return forward(Matrix(x)).col(0);
  }

  /// Batched forward pass that records the activations backward() needs.
  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x.rows());
    tape.inputs.resize(layers_.size());
    tape.inputs[0] = x;
    Matrix a;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      a.noalias() = layers_[l].weight * tape.inputs[l];
      a.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) tape.inputs[l + 1] = a.cwiseMax(Scalar(0));
    }
    tape.recorded = true;
    return a;
  }

  /// Reverse pass for a recorded forward. Parameter gradients are accumulated
  /// into `grads` when given; passing nullptr propagates to the input only.
  /// Returns dL/dx with one column per sample.
  Matrix backward(const Tape& tape, const Matrix& upstream, Gradients* grads) const {
    require(tape.recorded && tape.inputs.size() == layers_.size(), ErrorKind::kState,
            "DenseNet::backward called before a recorded forward pass");
    require(upstream.rows() == output_width() && upstream.cols() == tape.inputs[0].cols(),
            ErrorKind::kShape, "DenseNet::backward upstream shape mismatch");
    if (grads != nullptr)
      require(grads->layers.size() == layers_.size(), ErrorKind::kShape,
              "DenseNet::backward gradient buffer does not match network");
    Matrix g = upstream;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (grads != nullptr) {
        grads->layers[l].weight.noalias() += g * tape.inputs[l].transpose();
        grads->layers[l].bias += g.rowwise().sum();
      }
      Matrix prev = layers_[l].weight.transpose() * g;
      if (l > 0) prev = (tape.inputs[l].array() > Scalar(0)).select(prev, Scalar(0));
      g = std::move(prev);
    }
    return g;
  }

  ParamList<Scalar> parameters(const std::string& prefix) {
    return make_refs(layers_, prefix);
  }

  static ParamList<Scalar> make_refs(std::vector<Layer>& layers, const std::string& prefix) {
    ParamList<Scalar> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = prefix + ".layer" + std::to_string(l);
      out.push_back({base + ".weight", layers[l].weight.data(), layers[l].weight.rows(),
                     layers[l].weight.cols()});
      out.push_back({base + ".bias", layers[l].bias.data(), layers[l].bias.rows(), 1});
    }
    return out;
  }

 private:
  void check_input(Eigen::Index rows) const {
    require(!layers_.empty(), ErrorKind::kState, "DenseNet has no layers");
    if (rows != input_width())
      fail(ErrorKind::kShape, "DenseNet input width " + std::to_string(rows) +
                                  " does not match declared width " +
                                  std::to_string(input_width()));
  }

  std::vector<Eigen::Index> widths_;
  std::vector<Layer> layers_;
};

using DenseNetd = DenseNet<double>;

template <typename Scalar>
bool all_finite(const DenseNet<Scalar>& net) {
  for (const auto& l : net.layers())
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

}  // namespace onm::nn

#endif  // ONM_NN_DENSE_NET_HPP_

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

#ifndef ONM_NN_CHECKPOINT_HPP_
#define ONM_NN_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "onm/nn/dense_net.hpp"

namespace onm::nn {

/// Named parameter arrays with shape headers plus free-form metadata.
///
/// On disk this is a single JSON document:
///   {"format": "onm-checkpoint", "format_version": 1,
///    "meta": {...},
///    "tensors": {"<name>": {"shape": [rows, cols], "data": [...]}, ...}}
/// Data is stored column-major. Doubles round-trip exactly.
class Checkpoint {
 public:
  static constexpr int kFormatVersion = 1;

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void put(const std::string& name, const Eigen::MatrixXd& value);
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  const Eigen::MatrixXd& get(const std::string& name) const;

  /// True when any tensor name starts with `prefix`.
  bool has_namespace(const std::string& prefix) const;

  void put_net(const std::string& prefix, const DenseNetd& net);
  /// Loads a network saved with put_net, checking it matches `widths`.
  DenseNetd get_net(const std::string& prefix) const;

  const std::map<std::string, Eigen::MatrixXd>& tensors() const { return tensors_; }

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& doc);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, Eigen::MatrixXd> tensors_;
};

}  // namespace onm::nn

#endif  // ONM_NN_CHECKPOINT_HPP_

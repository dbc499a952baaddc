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

#include "onm/nn/checkpoint.hpp"

#include <fstream>

#include "onm/errors.hpp"

namespace onm {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kState: return "state";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace onm

namespace onm::nn {

using nlohmann::json;

void Checkpoint::put(const std::string& name, const Eigen::MatrixXd& value) {
  tensors_[name] = value;
}

const Eigen::MatrixXd& Checkpoint::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorKind::kNotFound, "checkpoint has no tensor '" + name + "'");
  return it->second;
}

bool Checkpoint::has_namespace(const std::string& prefix) const {
  auto it = tensors_.lower_bound(prefix);
  return it != tensors_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

void Checkpoint::put_net(const std::string& prefix, const DenseNetd& net) {
  json widths = json::array();
  for (auto w : net.widths()) widths.push_back(w);
  meta_["nets"][prefix] = widths;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    put(base + ".weight", net.layers()[l].weight);
    put(base + ".bias", net.layers()[l].bias);
  }
}

DenseNetd Checkpoint::get_net(const std::string& prefix) const {
  if (!meta_.contains("nets") || !meta_["nets"].contains(prefix))
    fail(ErrorKind::kNotFound, "checkpoint has no network '" + prefix + "'");
  std::vector<Eigen::Index> widths;
  for (const auto& w : meta_["nets"][prefix]) widths.push_back(w.get<Eigen::Index>());
  DenseNetd net(widths);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    const auto& w = get(base + ".weight");
    const auto& b = get(base + ".bias");
    auto& layer = net.layers()[l];
    require(w.rows() == layer.weight.rows() && w.cols() == layer.weight.cols() &&
                b.rows() == layer.bias.rows() && b.cols() == 1,
            ErrorKind::kShape, "checkpoint tensor shape mismatch under '" + base + "'");
    layer.weight = w;
    layer.bias = b.col(0);
  }
  return net;
}

json Checkpoint::to_json() const {
  json doc;
  doc["format"] = "onm-checkpoint";
  doc["format_version"] = kFormatVersion;
  doc["meta"] = meta_;
  json tensors = json::object();
  for (const auto& [name, m] : tensors_) {
    json t;
    t["shape"] = {m.rows(), m.cols()};
    t["data"] = std::vector<double>(m.data(), m.data() + m.size());
    tensors[name] = std::move(t);
  }
  doc["tensors"] = std::move(tensors);
  return doc;
}

Checkpoint Checkpoint::from_json(const json& doc) {
  if (doc.value("format", std::string{}) != "onm-checkpoint")
    fail(ErrorKind::kConfig, "not an onm checkpoint document");
  const int version = doc.value("format_version", -1);
  if (version != kFormatVersion)
    fail(ErrorKind::kConfig, "unsupported checkpoint format_version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.meta_ = doc.value("meta", json::object());
  for (const auto& [name, t] : doc.at("tensors").items()) {
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    const auto data = t.at("data").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(data.size()) == rows * cols, ErrorKind::kShape,
            "checkpoint tensor '" + name + "' data length does not match its shape");
    ckpt.tensors_[name] = Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out << to_json().dump();
  if (!out) fail(ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, "malformed checkpoint " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace onm::nn

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

#include "onm/cli/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "onm/errors.hpp"
#include "onm/improve/pipeline.hpp"
#include "onm/json_fields.hpp"

namespace onm::cli {

using nlohmann::json;

ExperimentConfig::ExperimentConfig() : policy(improve::default_policy_config(env)) {}

void ExperimentConfig::validate() const {
  env.validate();
  policy.validate();
  vib.validate();
  require(policy.obs_dim == env.obs_dim(), ErrorKind::kConfig,
          "policy.obs_dim does not match the environment");
  require(training.iterations >= 0, ErrorKind::kConfig, "training.iterations must be >= 0");
  require(training.batch_size >= 1, ErrorKind::kConfig, "training.batch_size must be >= 1");
  require(demos.count >= 1, ErrorKind::kConfig, "demos.count must be >= 1");
  require(eval.starts >= 1, ErrorKind::kConfig, "eval.starts must be >= 1");
  require(eval.attempts >= 1, ErrorKind::kConfig, "eval.attempts must be >= 1");
  for (const auto& p : improve) p.validate();
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"env", c.env},
           {"policy", c.policy},
           {"vib", c.vib},
           {"training", c.training},
           {"demos", {{"count", c.demos.count}, {"seed", c.demos.seed}}},
           {"eval", {{"starts", c.eval.starts}, {"attempts", c.eval.attempts}}},
           {"improve", c.improve},
           {"paths",
            {{"dataset", c.paths.dataset},
             {"checkpoint", c.paths.checkpoint},
             {"reports", c.paths.reports}}}};
}

namespace {

const std::vector<std::string> kSections = {"env", "policy", "vib", "training",
                                            "demos", "eval", "improve", "paths"};

/// `base` with the keys of `section` replaced.
template <typename T>
T overlay(const T& base, const json& section, const std::string& name) {
  if (!section.is_object()) fail(ErrorKind::kConfig, name + ": expected an object");
  json merged = base;
  merged.update(section);
  return merged.get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kSections.begin(), kSections.end(), key) == kSections.end())
      fail(ErrorKind::kConfig, "config: unknown section '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (j.contains("env")) {
      const json& e = j.at("env");
      c.env = e.is_string() ? env::EnvConfig::by_name(e.get<std::string>()) : e.get<env::EnvConfig>();
    }
    c.policy = improve::default_policy_config(c.env);
    if (j.contains("policy")) {
      const json& p = j.at("policy");
      if (p.is_object() && p.contains("obs_dim"))
        fail(ErrorKind::kConfig, "policy.obs_dim is derived from the environment");
      c.policy = overlay(c.policy, p, "policy");
    }
    if (j.contains("vib")) c.vib = overlay(c.vib, j.at("vib"), "vib");
    if (j.contains("training")) c.training = overlay(c.training, j.at("training"), "training");
    if (j.contains("demos")) {
      const json& d = j.at("demos");
      c.demos.count = read_field(d, "count", "demos", c.demos.count);
      c.demos.seed = read_field(d, "seed", "demos", c.demos.seed);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      c.eval.starts = read_field(e, "starts", "eval", c.eval.starts);
      c.eval.attempts = read_field(e, "attempts", "eval", c.eval.attempts);
    }
    if (j.contains("improve")) {
      const json& plans = j.at("improve");
      if (!plans.is_array() || plans.empty())
        fail(ErrorKind::kConfig, "improve must be a non-empty list of round plans");
      c.improve.clear();
      for (const auto& p : plans) c.improve.push_back(p.get<improve::RoundPlan>());
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      c.paths.dataset = read_field(p, "dataset", "paths", c.paths.dataset);
      c.paths.checkpoint = read_field(p, "checkpoint", "paths", c.paths.checkpoint);
      c.paths.reports = read_field(p, "reports", "paths", c.paths.reports);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::pair<json, std::optional<std::filesystem::path>> load_config_document(
    const std::optional<std::filesystem::path>& explicit_path) {
  std::optional<std::filesystem::path> path = explicit_path;
  if (!path) {
    if (const char* env_path = std::getenv(kConfigEnvVar); env_path && *env_path) path = env_path;
  }
  if (!path) return {json::object(), std::nullopt};
  std::ifstream in(*path);
  if (!in) fail(ErrorKind::kConfig, "cannot open config file " + path->string());
  try {
    return {json::parse(in), path};
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "config file " + path->string() + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::kConfig, "override '" + assignment + "' must look like section.key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json::json_pointer ptr("/" + [&] {
    std::string p = key;
    for (auto& ch : p)
      if (ch == '.') ch = '/';
    return p;
  }());
  if (!doc.is_object()) doc = json::object();
  // Overriding a field of an environment given by name expands it first.
  if (key.rfind("env.", 0) == 0 && doc.contains("env") && doc["env"].is_string())
    doc["env"] = json{{"name", doc["env"].get<std::string>()}};
  doc[ptr] = std::move(value);
}

}  // namespace onm::cli

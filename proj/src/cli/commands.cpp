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

#include "onm/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "httplib.h"

#include "onm/analysis/metrics.hpp"
#include "onm/env/dataset.hpp"
#include "onm/errors.hpp"
#include "onm/improve/pipeline.hpp"
#include "onm/improve/rollouts.hpp"
#include "onm/improve/rounds.hpp"
#include "onm/steer/http.hpp"
#include "onm/steer/service.hpp"

namespace onm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

/// Reads a dataset and checks its sidecar (when present) names the same env.
std::vector<env::TrajectoryRecord> load_dataset(const ExperimentConfig& cfg, const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kIo, "dataset " + path.string() + " does not exist");
  if (fs::exists(env::meta_path(path))) {
    const auto meta = env::read_meta(path);
    if (meta.env.name != cfg.env.name)
      fail(ErrorKind::kConfig, "dataset " + path.string() + " was generated for '" + meta.env.name +
                                   "' but the config names '" + cfg.env.name + "'");
  }
  auto records = env::read_jsonl(path);
  if (records.empty()) fail(ErrorKind::kInput, "dataset " + path.string() + " is empty");
  return records;
}

vib::Model load_model(const ExperimentConfig& cfg, const std::string& path) {
  vib::Model model = vib::Model::load(path);
  improve::check_compatible(model, cfg.env);
  return model;
}

json model_summary(const vib::Model& m) {
  return json{{"train_step", m.train_step},
              {"env", m.env_name},
              {"has_plugin", m.plugin.has_value()},
              {"base_checksum", hex(m.base_checksum())},
              {"plugin_checksum", m.plugin ? json(hex(m.plugin_checksum())) : json(nullptr)}};
}

}  // namespace

std::string default_snr_path(const std::string& checkpoint) { return checkpoint + ".snr.json"; }

json cmd_demo_gen(const ExperimentConfig& cfg, const DemoGenOptions& o) {
  const int n = o.n.value_or(cfg.demos.count);
  const std::uint64_t seed = o.seed.value_or(cfg.demos.seed);
  const fs::path out = o.out.value_or(cfg.paths.dataset);
  require(n >= 1, ErrorKind::kConfig, "n must be >= 1");
  const auto records = env::generate_demos(cfg.env, n, seed, cfg.policy.horizon);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  env::write_jsonl(out, records);
  env::DatasetMeta meta;
  meta.env = cfg.env;
  meta.extra = json{{"command", "demo-gen"}, {"n", n}, {"seed", seed}, {"config", cfg}};
  env::write_meta(out, meta);

  double mean_len = 0.0;
  int left = 0;
  int right = 0;
  for (const auto& r : records) {
    mean_len += static_cast<double>(r.length()) / static_cast<double>(records.size());
    const auto side = env::detour_side(cfg.env, r);
    left += side == env::DetourSide::kLeft;
    right += side == env::DetourSide::kRight;
  }
  return json{{"command", "demo-gen"},
              {"out", out.string()},
              {"records", records.size()},
              {"mean_length", mean_len},
              {"detours", {{"left", left}, {"right", right}}},
              {"config", cfg}};
}

json cmd_train(const ExperimentConfig& cfg, const TrainOptions& o, std::ostream* log) {
  const fs::path dataset = o.dataset.value_or(cfg.paths.dataset);
  const fs::path out = o.out.value_or(cfg.paths.checkpoint);
  const int iterations = o.iterations.value_or(cfg.training.iterations);
  require(iterations >= 0, ErrorKind::kConfig, "iterations must be >= 0");
  const auto records = load_dataset(cfg, dataset);

  std::optional<nn::Checkpoint> resumed;
  vib::Model model;
  if (o.resume) {
    resumed = nn::Checkpoint::load(*o.resume);
    model = vib::Model::from_checkpoint(*resumed);
    improve::check_compatible(model, cfg.env);
    if (o.no_vib && model.plugin)
      fail(ErrorKind::kConfig, "--no-vib cannot resume a checkpoint that carries the plug-in");
  } else {
    model = improve::initialize_model(cfg.env, cfg.policy, cfg.vib, !o.no_vib, records,
                                      cfg.training.seed);
  }
  vib::TrainingConfig training = cfg.training;
  training.use_vib = model.plugin.has_value();

  const auto data = improve::make_training_set(records, model.policy);
  vib::Trainer trainer(model, training);
  if (resumed) trainer.restore_optimizer_state(*resumed);
  const std::int64_t start_step = model.train_step;
  const auto entries = trainer.train(data, iterations, [&](const vib::LossLogEntry& e) {
    if (log) *log << json{{"step", e.step}, {"imitation", e.losses.imitation},
                          {"bottleneck", e.losses.bottleneck}}.dump() << '\n' << std::flush;
  });
  model.embedding_scale = vib::embedding_scale(model.policy, data.observations);
  model.provenance = json{{"command", "train"}, {"dataset", dataset.string()}, {"config", cfg}};
  nn::Checkpoint ckpt = model.to_checkpoint();
  trainer.save_optimizer_state(ckpt);
  ckpt.save(out);

  json final_losses = nullptr;
  if (!entries.empty())
    final_losses = {{"imitation", entries.back().losses.imitation},
                    {"bottleneck", entries.back().losses.bottleneck}};
  return json{{"command", "train"},
              {"checkpoint", out.string()},
              {"dataset", dataset.string()},
              {"start_step", start_step},
              {"iterations", iterations},
              {"final_losses", final_losses},
              {"model", model_summary(model)},
              {"config", cfg}};
}

json cmd_eval(const ExperimentConfig& cfg, const EvalOptions& o) {
  const int starts = o.starts.value_or(cfg.eval.starts);
  const int attempts = o.attempts.value_or(cfg.eval.attempts);
  const double alpha = o.alpha.value_or(cfg.vib.alpha);
  require(starts >= 1 && attempts >= 1, ErrorKind::kConfig, "starts and attempts must be >= 1");
  require(alpha >= 0.0, ErrorKind::kConfig, "alpha must be >= 0");
  json result{{"command", "eval"}, {"mode", o.mode}, {"config", cfg}};
  improve::EvalMetrics metrics;
  if (o.mode == "expert") {
    improve::RolloutPlan plan;
    plan.starts = starts;
    plan.attempts = attempts;
    plan.seed_base = improve::kEvalSeedBase;
    metrics = improve::summarize(improve::collect_expert_rollouts(cfg.env, plan, cfg.policy.horizon),
                                 cfg.env, starts, attempts);
  } else {
    const vib::ActMode mode = vib::parse_act_mode(o.mode);
    const std::string path = o.checkpoint.value_or(cfg.paths.checkpoint);
    const vib::Model model = load_model(cfg, path);
    if (mode == vib::ActMode::kExplore && !model.plugin)
      fail(ErrorKind::kConfig, "explore mode needs a checkpoint with the plug-in");
    metrics = improve::evaluate(model, cfg.env, starts, attempts, mode, alpha);
    result["checkpoint"] = path;
    result["alpha"] = alpha;
  }
  result["metrics"] = metrics;
  return result;
}

json cmd_snr_report(const ExperimentConfig& cfg, const SnrOptions& o) {
  const std::string ckpt = o.checkpoint.value_or(cfg.paths.checkpoint);
  const fs::path dataset = o.dataset.value_or(cfg.paths.dataset);
  const double threshold = o.threshold_db.value_or(cfg.vib.threshold_db);
  const vib::Model model = load_model(cfg, ckpt);
  const auto spectrum = improve::dataset_spectrum(model, load_dataset(cfg, dataset));
  json report = analysis::snr_report(spectrum, threshold);
  report["command"] = "snr-report";
  report["checkpoint"] = ckpt;
  report["dataset"] = dataset.string();
  report["effective"] = analysis::effective_dimensions(spectrum, threshold);
  report["ranked"] = analysis::rank_dimensions(spectrum);
  report["config"] = cfg;
  const fs::path out = o.out.value_or(default_snr_path(ckpt));
  write_json(out, report);
  report["out"] = out.string();
  return report;
}

json cmd_improve(const ExperimentConfig& cfg, const ImproveOptions& o, std::ostream* progress) {
  const std::string ckpt = o.checkpoint.value_or(cfg.paths.checkpoint);
  const fs::path dataset = o.dataset.value_or(cfg.paths.dataset);
  const fs::path out_dir = o.out_dir.value_or(cfg.paths.reports);
  std::vector<improve::RoundPlan> plans = cfg.improve;
  if (o.rounds) {
    require(*o.rounds >= 1, ErrorKind::kConfig, "rounds must be >= 1");
    plans.resize(static_cast<std::size_t>(*o.rounds), plans.back());
  }
  for (auto& p : plans) {
    if (o.mode) p.mode = vib::parse_act_mode(*o.mode);
    if (o.alpha) p.alpha = *o.alpha;
    p.validate();
  }

  vib::Model model = load_model(cfg, ckpt);
  std::vector<env::TrajectoryRecord> data = load_dataset(cfg, dataset);
  const improve::RoundContext ctx{cfg.env, cfg.training, cfg.vib.threshold_db};
  fs::create_directories(out_dir);

  json reports = json::array();
  std::optional<double> before;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const int round = static_cast<int>(i) + 1;
    improve::RoundResult r = improve::run_round(model, data, plans[i], ctx, round, before);
    const std::string stem = "round_" + std::to_string(round);
    r.model.provenance = json{{"command", "improve"}, {"round", round}, {"parent", ckpt}, {"config", cfg}};
    r.model.save(out_dir / (stem + ".ckpt.json"));
    env::write_jsonl(out_dir / (stem + ".dataset.jsonl"), r.dataset);
    env::DatasetMeta meta;
    meta.env = cfg.env;
    meta.extra = json{{"command", "improve"}, {"round", round}, {"config", cfg}};
    env::write_meta(out_dir / (stem + ".dataset.jsonl"), meta);
    json rep = r.report;
    rep["plan"] = plans[i];
    rep["checkpoint"] = (out_dir / (stem + ".ckpt.json")).string();
    write_json(out_dir / (stem + ".report.json"), json{{"report", rep}, {"config", cfg}});
    if (progress) *progress << rep.dump() << '\n' << std::flush;
    reports.push_back(std::move(rep));
    before = r.report.success_after;
    model = std::move(r.model);
    data = std::move(r.dataset);
  }
  json summary{{"command", "improve"},
               {"checkpoint", ckpt},
               {"dataset", dataset.string()},
               {"out_dir", out_dir.string()},
               {"rounds", reports},
               {"config", cfg}};
  write_json(out_dir / "improve.json", summary);
  return summary;
}

int cmd_serve(const ExperimentConfig& cfg, const ServeOptions& o,
              const std::function<void(int port)>& on_ready) {
  const std::string ckpt = o.checkpoint.value_or(cfg.paths.checkpoint);
  vib::Model model = load_model(cfg, ckpt);
  std::optional<analysis::SnrSpectrum> spectrum;
  const fs::path snr = o.snr.value_or(default_snr_path(ckpt));
  if (fs::exists(snr)) {
    std::ifstream in(snr);
    spectrum = analysis::spectrum_from_report(json::parse(in));
  } else if (o.snr) {
    fail(ErrorKind::kIo, "SNR report " + snr.string() + " does not exist");
  }
  steer::ServiceOptions so;
  so.threshold_db = cfg.vib.threshold_db;
  so.record_path = fs::path(o.record.value_or((fs::path(cfg.paths.reports) / "steered.jsonl").string()));
  if (so.record_path->has_parent_path()) fs::create_directories(so.record_path->parent_path());
  steer::SteerService service(so);
  service.register_checkpoint(o.checkpoint_id, std::move(model), spectrum);

  httplib::Server server;
  steer::HttpOptions ho;
  if (o.ui_dir) ho.ui_dir = *o.ui_dir;
  steer::mount_routes(server, service, ho);
  const int port = o.port == 0 ? server.bind_to_any_port(o.host) : o.port;
  if (o.port != 0 && !server.bind_to_port(o.host, o.port))
    fail(ErrorKind::kIo, "cannot bind " + o.host + ":" + std::to_string(o.port));
  if (port < 0) fail(ErrorKind::kIo, "cannot bind " + o.host);
  if (on_ready) on_ready(port);
  return server.listen_after_bind() ? 0 : 1;
}

}  // namespace onm::cli

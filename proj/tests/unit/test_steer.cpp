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

#include <atomic>
#include <thread>

#include "doctest.h"

#include "onm/errors.hpp"
#include "onm/improve/pipeline.hpp"
#include "onm/improve/rollouts.hpp"
#include "onm/steer/http.hpp"
#include "onm/steer/service.hpp"
#include "support/test_support.hpp"

// After the Eigen headers: resolv.h, pulled in by httplib, defines _res.
#include "httplib.h"

using namespace onm;
using namespace onm::steer;
using nlohmann::json;

namespace {

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an onm::Error");
  return ErrorKind::kIo;
}

struct Fixture {
  env::EnvConfig env;
  std::vector<env::TrajectoryRecord> demos;
  vib::Model model;
  analysis::SnrSpectrum spectrum;

  Fixture() {
    env = env::EnvConfig::reach();
    demos = env::generate_demos(env, 10, 0, 4);
    policy::PolicyConfig pc = improve::default_policy_config(env);
    pc.horizon = 4;
    pc.embed_width = 8;
    pc.encoder_hidden = 16;
    pc.head_hidden = 32;
    pc.head_layers = 2;
    pc.step_code_width = 4;
    pc.train_steps = 8;
    pc.inference_steps = 4;
    vib::VibConfig vc;
    vc.latent_dim = 4;
    vc.hidden = 16;
    vc.layers = 2;
    model = improve::initialize_model(env, pc, vc, true, demos, 0);
    vib::TrainingConfig tc;
    tc.batch_size = 32;
    tc.optimizer.learning_rate = 1e-3;
    improve::train_model(model, demos, tc, 10000);
    spectrum = improve::dataset_spectrum(model, demos);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Picks the proposal whose trajectory ends closest to the goal.
int closest_to_goal(const analysis::ProposalSet& set, const Eigen::Vector2d& goal) {
  int best = set.proposals.front().id;
  double best_d = 1e9;
  for (const auto& p : set.proposals) {
    const double d = (p.trajectory.row(p.trajectory.rows() - 1).transpose() - goal).norm();
    if (d < best_d) best_d = d, best = p.id;
  }
  return best;
}

// Runs an httplib server on an ephemeral port for the lifetime of the object.
class TestServer {
 public:
  explicit TestServer(SteerService& svc) {
    mount_routes(server_, svc, HttpOptions{});
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("http_status: error kinds map to status codes") {
  CHECK(http_status(ErrorKind::kNotFound) == 404);
  CHECK(http_status(ErrorKind::kConflict) == 409);
  CHECK(http_status(ErrorKind::kState) == 409);
  CHECK(http_status(ErrorKind::kPrecondition) == 412);
  CHECK(http_status(ErrorKind::kIndex) == 400);
  CHECK(http_status(ErrorKind::kInput) == 400);
  CHECK(http_status(ErrorKind::kConfig) == 400);
  CHECK(http_status(ErrorKind::kNumeric) == 500);
}

TEST_CASE("create_session: fresh ids, identical starts for one seed, errors") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  const auto a = svc.create_session({"ck", 5, std::nullopt});
  const auto b = svc.create_session({"ck", 5, std::nullopt});
  CHECK(a != b);
  const json da = svc.session(a)->describe(), db = svc.session(b)->describe();
  CHECK(da["step"] == 0);
  CHECK(da["observation"] == db["observation"]);
  CHECK(kind_of([&] { svc.create_session({"nope", 0, std::nullopt}); }) == ErrorKind::kNotFound);
  CHECK(kind_of([&] { svc.session("s99"); }) == ErrorKind::kNotFound);
  CHECK(kind_of([&] { svc.create_session({"ck", 0, env::EnvConfig::push()}); }) ==
        ErrorKind::kConfig);
  CHECK(kind_of([] { parse_create_request(json{{"seed", 1}}); }) == ErrorKind::kInput);
  try {
    parse_create_request(json{{"checkpoint", "ck"}, {"env", {{"horizon", -3}}}});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("horizon") != std::string::npos);
  }
}

TEST_CASE("dimensions: ranked list, effective flags and the missing spectrum") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  svc.register_checkpoint("bare", f.model);
  const auto s = svc.session(svc.create_session({"ck", 1, std::nullopt}));
  const json d = s->dimensions(0.0);
  CHECK(d["count"] == 4);
  REQUIRE(d["dims"].size() == 4);
  const auto ranked = analysis::rank_dimensions(f.spectrum);
  for (int i = 0; i < 4; ++i) {
    CHECK(d["dims"][i]["index"] == ranked[i]);
    CHECK(d["dims"][i]["effective"] == (f.spectrum.db[ranked[i]] > 0.0));
  }
  CHECK(s->dimensions(1e9)["effective"].empty());
  CHECK(s->dimensions(1e9)["dims"].size() == 4);
  const auto bare = svc.session(svc.create_session({"bare", 1, std::nullopt}));
  CHECK(kind_of([&] { bare->dimensions(0.0); }) == ErrorKind::kPrecondition);
}

TEST_CASE("proposals: k distinct ids, idempotent, equal to the library call") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  const auto s = svc.session(svc.create_session({"ck", 2, std::nullopt}));
  const auto p1 = s->proposals(1, 64, 8);
  REQUIRE(p1.proposals.size() == 8);
  std::set<int> ids;
  for (const auto& p : p1.proposals) ids.insert(p.id);
  CHECK(ids.size() == 8);
  const auto p2 = s->proposals(1, 64, 8);
  analysis::ProposalRequest req;
  req.dim = 1;
  const auto lib = analysis::propose_along_dimension(f.model, f.env, env::reset(f.env, 2).state, req,
                                                     vib::sampler_noise(f.model, 2, 0));
  for (int i = 0; i < 8; ++i) {
    CHECK(p2.proposals[i].trajectory == p1.proposals[i].trajectory);
    CHECK(p1.proposals[i].chunk == lib.proposals[i].chunk);
    CHECK(p1.proposals[i].trajectory == lib.proposals[i].trajectory);
    CHECK(p1.proposals[i].offset == lib.proposals[i].offset);
  }
  CHECK(kind_of([&] { s->proposals(4, 64, 8); }) == ErrorKind::kIndex);
  CHECK(kind_of([&] { s->proposals(0, 4, 8); }) == ErrorKind::kInput);
  // Previews never touch the session's environment.
  CHECK(s->state() == env::reset(f.env, 2).state);
}

TEST_CASE("select: the zero offset executes the alpha 0 action, stale ids conflict") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  const auto s = svc.session(svc.create_session({"ck", 3, std::nullopt}));
  const auto set = s->proposals(0, 9, 9);
  const auto old_ids = set.proposals;
  int zero_id = -1;
  for (const auto& p : set.proposals)
    if (p.offset == 0.0) zero_id = p.id;
  REQUIRE(zero_id >= 0);

  const auto start = env::reset(f.env, 3);
  nn::RngStream rng(0, "unused");
  const auto alpha0 = vib::act(f.model, start.observation, vib::ActMode::kExplore, 0.0, rng,
                               vib::sampler_noise(f.model, 3, 0));
  env::EnvState expect = start.state;
  for (Eigen::Index t = 0; t < alpha0.actions.rows(); ++t)
    expect = env::step(f.env, expect, env::clip_action(f.env, alpha0.actions.row(t).transpose())).state;

  const auto r = s->select(zero_id);
  CHECK(r.steps_executed == 4);
  CHECK(s->state() == expect);
  CHECK(kind_of([&] { s->select(old_ids[0].id); }) == ErrorKind::kConflict);
  const json h = s->history();
  REQUIRE(h["entries"].size() == 1);
  CHECK(h["entries"][0]["provenance"] == "steered:0:" + std::to_string(zero_id));
}

TEST_CASE("step_auto: alpha 0 repeats, matches collect_rollouts, history keeps order") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  const auto a = svc.session(svc.create_session({"ck", 4, std::nullopt}));
  const auto b = svc.session(svc.create_session({"ck", 4, std::nullopt}));
  CHECK(json(a->step_auto(0.0)) == json(b->step_auto(0.0)));
  CHECK(a->state() == b->state());

  const auto c = svc.session(svc.create_session({"ck", 11, std::nullopt}));
  ExecutionResult last;
  while (!(last = c->step_auto(2.0)).done) {
  }
  improve::RolloutPlan plan;
  plan.starts = 1;
  plan.attempts = 1;
  plan.alpha = 2.0;
  plan.seed_base = 11;
  const auto batch = improve::collect_rollouts(f.model, f.env, plan, vib::ActMode::kExplore);
  REQUIRE(last.record.has_value());
  CHECK(last.record->actions == batch.records[0].actions);
  CHECK(last.record->source == env::Source::kRollout);

  const auto d = svc.session(svc.create_session({"ck", 6, std::nullopt}));
  d->step_auto(0.0);
  const int pid = d->proposals(2, 16, 4).proposals[1].id;
  d->select(pid);
  d->step_auto(1.0);
  const json h = d->history();
  REQUIRE(h["entries"].size() == 3);
  CHECK(h["entries"][0]["provenance"] == "auto");
  CHECK(h["entries"][1]["provenance"] == "steered:2:" + std::to_string(pid));
  CHECK(h["entries"][2]["provenance"] == "auto");
  for (int i = 0; i < 3; ++i) CHECK(h["entries"][i]["chunk_index"] == i);
  CHECK(kind_of([&] { d->step_auto(-1.0); }) == ErrorKind::kInput);
}

TEST_CASE("steered episode: reaches the goal, persists, replays, rejects further selects") {
  const auto& f = fixture();
  testing::TempDir dir("steer");
  ServiceOptions opts;
  opts.record_path = dir / "steered.jsonl";
  SteerService svc(opts);
  svc.register_checkpoint("ck", f.model, f.spectrum);
  const int top = analysis::rank_dimensions(f.spectrum).front();
  // Greedy scripted operator over ten starts; a weak policy may miss some.
  int successes = 0;
  std::vector<std::shared_ptr<Session>> sessions;
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const auto s = svc.session(svc.create_session({"ck", seed, std::nullopt}));
    ExecutionResult r;
    int last_id = -1;
    while (!r.done) {
      const auto set = s->proposals(top, 64, 8);
      last_id = closest_to_goal(set, s->state().goal);
      r = s->select(last_id);
    }
    successes += r.success;
    CHECK(kind_of([&] { s->select(last_id); }) == ErrorKind::kState);
    CHECK(kind_of([&] { s->proposals(top, 64, 8); }) == ErrorKind::kState);
    CHECK(kind_of([&] { s->step_auto(0.0); }) == ErrorKind::kState);
    sessions.push_back(s);
  }
  CHECK(successes >= 5);

  const auto stored = env::read_jsonl(*opts.record_path);
  REQUIRE(stored.size() == 10);
  int stored_successes = 0;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    CHECK(stored[i].source == env::Source::kSteered);
    CHECK(stored[i].seed == 20 + i);
    CHECK(env::replay(f.env, stored[i]) == sessions[i]->state());
    CHECK(stored[i].success == env::is_success(f.env, sessions[i]->state()));
    stored_successes += stored[i].success;
  }
  CHECK(stored_successes == successes);
  CHECK(svc.finished_records().size() == 10);
}

TEST_CASE("concurrency: racing requests either run or conflict, never interleave") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  const auto s = svc.session(svc.create_session({"ck", 8, std::nullopt}));
  std::atomic<int> ran{0}, conflicts{0}, other{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 3; ++i) {
        try {
          s->step_auto(0.0);
          ++ran;
        } catch (const Error& e) {
          (e.kind() == ErrorKind::kConflict ? conflicts : other)++;
        }
      }
    });
  for (auto& t : threads) t.join();
  const json h = s->history();
  CHECK(int(h["entries"].size()) == ran.load());
  CHECK(ran + conflicts + other == 18);
  const int steps = s->describe()["step"];
  int executed = 0;
  for (const auto& e : h["entries"]) executed += int(e["positions"].size());
  CHECK(steps == executed);
}

TEST_CASE("http: the steering workflow end to end") {
  const auto& f = fixture();
  SteerService svc;
  svc.register_checkpoint("ck", f.model, f.spectrum);
  svc.register_checkpoint("bare", f.model);
  TestServer server(svc);
  auto cli = server.client();

  auto health = cli.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["checkpoints"] == json{"bare", "ck"});

  auto created = cli.Post("/api/sessions", R"({"checkpoint":"ck","seed":21})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string sid = json::parse(created->body)["id"];
  const std::string base = "/api/sessions/" + sid;

  CHECK(cli.Get(base)->status == 200);
  auto dims = cli.Get(base + "/dimensions");
  CHECK(dims->status == 200);
  const int top = json::parse(dims->body)["dims"][0]["index"];

  CHECK(cli.Get(base + "/proposals")->status == 400);
  CHECK(cli.Get(base + "/proposals?dim=abc")->status == 400);
  CHECK(cli.Get(base + "/proposals?dim=99")->status == 400);
  CHECK(cli.Get("/api/sessions/zzz")->status == 404);
  CHECK(cli.Post("/api/sessions", R"({"checkpoint":"missing"})", "application/json")->status == 404);
  CHECK(cli.Post("/api/sessions", "not json", "application/json")->status == 400);
  auto bare = cli.Post("/api/sessions", R"({"checkpoint":"bare"})", "application/json");
  const std::string bare_id = json::parse(bare->body)["id"];
  auto pre = cli.Get("/api/sessions/" + bare_id + "/dimensions");
  CHECK(pre->status == 412);
  CHECK(json::parse(pre->body)["error"]["message"].get<std::string>().find("snr-report") !=
        std::string::npos);

  auto first = cli.Get(base + "/proposals?dim=" + std::to_string(top) + "&batch=16&k=4");
  REQUIRE(first->status == 200);
  const int stale = json::parse(first->body)["proposals"][0]["id"];
  CHECK(json::parse(first->body)["proposals"].size() == 4);
  CHECK(cli.Post(base + "/auto", R"({"alpha":0})", "application/json")->status == 200);
  CHECK(cli.Post(base + "/select", json{{"proposal", stale}}.dump(), "application/json")->status ==
        409);
  CHECK(cli.Post(base + "/select", "{}", "application/json")->status == 400);

  bool done = false;
  while (!done) {
    auto props = cli.Get(base + "/proposals?dim=" + std::to_string(top));
    REQUIRE(props->status == 200);
    const json set = json::parse(props->body);
    const auto goal = svc.session(sid)->state().goal;
    int pick = set["proposals"][0]["id"];
    double best = 1e9;
    for (const auto& p : set["proposals"]) {
      const auto& end = p["trajectory"].back();
      const double d = std::hypot(end[0].get<double>() - goal.x(), end[1].get<double>() - goal.y());
      if (d < best) best = d, pick = p["id"];
    }
    auto sel = cli.Post(base + "/select", json{{"proposal", pick}}.dump(), "application/json");
    REQUIRE(sel->status == 200);
    done = json::parse(sel->body)["done"];
  }
  CHECK(cli.Post(base + "/auto", "{}", "application/json")->status == 409);
  const json hist = json::parse(cli.Get(base + "/history")->body);
  CHECK(hist["entries"][0]["provenance"] == "auto");
  CHECK(hist["entries"][1]["provenance"].get<std::string>().rfind("steered:", 0) == 0);
  CHECK(svc.finished_records().size() == 1);
  CHECK(cli.Get("/")->status == 200);
}

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

#include "onm/steer/http.hpp"

#include <string>

#include "httplib.h"
#include "json.hpp"

#include "onm/json_fields.hpp"
#include "onm/version.hpp"

namespace onm::steer {

using nlohmann::json;

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict:
    case ErrorKind::kState: return 409;
    case ErrorKind::kPrecondition: return 412;
    case ErrorKind::kShape:
    case ErrorKind::kDomain:
    case ErrorKind::kConfig:
    case ErrorKind::kIndex:
    case ErrorKind::kInput: return 400;
    case ErrorKind::kNumeric:
    case ErrorKind::kIo: return 500;
  }
  return 500;
}

namespace {

constexpr const char* kJson = "application/json";

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>onm steering</title></head>
<body>
<h1>onm steering service</h1>
<p>No UI bundle was found. The JSON API is available under <code>/api</code>:</p>
<ul>
<li>GET /api/health</li>
<li>POST /api/sessions</li>
<li>GET /api/sessions/{id}</li>
<li>GET /api/sessions/{id}/dimensions</li>
<li>GET /api/sessions/{id}/proposals?dim=&amp;batch=&amp;k=</li>
<li>POST /api/sessions/{id}/select</li>
<li>POST /api/sessions/{id}/auto</li>
<li>GET /api/sessions/{id}/history</li>
</ul>
</body></html>
)";

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& msg) {
  send_json(res, json{{"error", {{"kind", kind}, {"message", msg}}}}, status);
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, to_string(ErrorKind::kInput), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json body_object(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) fail(ErrorKind::kInput, "request body must be a JSON object");
  return j;
}

int int_param(const httplib::Request& req, const char* name, std::optional<int> fallback) {
  if (!req.has_param(name)) {
    if (!fallback) fail(ErrorKind::kInput, std::string("query parameter '") + name + "' is required");
    return *fallback;
  }
  const std::string v = req.get_param_value(name);
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    fail(ErrorKind::kInput, std::string("query parameter '") + name + "' must be an integer");
  return out;
}

}  // namespace

void mount_routes(httplib::Server& server, SteerService& service, const HttpOptions& options) {
  SteerService* svc = &service;

  server.Get("/api/health", guarded([svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, json{{"status", "ok"}, {"version", kVersion}, {"checkpoints", svc->checkpoint_ids()}});
  }));

  server.Post("/api/sessions", guarded([svc](const httplib::Request& req, httplib::Response& res) {
    const std::string id = svc->create_session(parse_create_request(body_object(req)));
    send_json(res, svc->session(id)->describe(), 201);
  }));

  server.Get(R"(/api/sessions/([^/]+))",
             guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->session(req.matches[1])->describe());
             }));

  server.Get(R"(/api/sessions/([^/]+)/dimensions)",
             guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->session(req.matches[1])->dimensions(svc->threshold_db()));
             }));

  server.Get(R"(/api/sessions/([^/]+)/proposals)",
             guarded([svc](const httplib::Request& req, httplib::Response& res) {
               const int dim = int_param(req, "dim", std::nullopt);
               const int batch = int_param(req, "batch", 64);
               const int k = int_param(req, "k", 8);
               send_json(res, json(svc->session(req.matches[1])->proposals(dim, batch, k)));
             }));

  server.Post(R"(/api/sessions/([^/]+)/select)",
              guarded([svc](const httplib::Request& req, httplib::Response& res) {
                const json body = body_object(req);
                if (!body.contains("proposal")) fail(ErrorKind::kInput, "select.proposal is required");
                const int id = read_field(body, "proposal", "select", 0);
                send_json(res, json(svc->session(req.matches[1])->select(id)));
              }));

  server.Post(R"(/api/sessions/([^/]+)/auto)",
              guarded([svc](const httplib::Request& req, httplib::Response& res) {
                const double alpha = read_field(body_object(req), "alpha", "auto", 0.0);
                send_json(res, json(svc->session(req.matches[1])->step_auto(alpha)));
              }));

  server.Get(R"(/api/sessions/([^/]+)/history)",
             guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->session(req.matches[1])->history());
             }));

  const bool has_bundle =
      options.ui_dir && std::filesystem::exists(*options.ui_dir / "index.html");
  if (has_bundle) {
    server.set_mount_point("/", options.ui_dir->string());
  } else {
    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kFallbackPage, "text/html");
    });
  }
}

}  // namespace onm::steer

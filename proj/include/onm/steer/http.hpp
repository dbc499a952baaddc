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

#ifndef ONM_STEER_HTTP_HPP_
#define ONM_STEER_HTTP_HPP_

#include <filesystem>
#include <optional>

#include "onm/errors.hpp"
#include "onm/steer/service.hpp"

namespace httplib {
class Server;
}

namespace onm::steer {

int http_status(ErrorKind kind);

struct HttpOptions {
  /// Directory holding the UI bundle (index.html). A built-in page is served
  /// at / when absent.
  std::optional<std::filesystem::path> ui_dir;
};

/// Registers the /api routes and the static UI on `server`. `service` must
/// outlive the server.
void mount_routes(httplib::Server& server, SteerService& service, const HttpOptions& options = {});

}  // namespace onm::steer

#endif  // ONM_STEER_HTTP_HPP_

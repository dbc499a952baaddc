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

#ifndef ONM_JSON_FIELDS_HPP_
#define ONM_JSON_FIELDS_HPP_

#include <string>
#include <type_traits>

#include "json.hpp"

#include "onm/errors.hpp"

namespace onm {

/// Reads `key` from object `j` when present, else returns `fallback`.
/// Type mismatches raise a config error naming `prefix.key`.
template <typename T>
T read_field(const nlohmann::json& j, const char* key, const std::string& prefix, T fallback) {
  if (!j.is_object()) fail(ErrorKind::kConfig, prefix + ": expected an object");
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  const std::string where = prefix.empty() ? std::string(key) : prefix + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) fail(ErrorKind::kConfig, where + " must be a boolean");
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) fail(ErrorKind::kConfig, where + " must be a non-negative integer");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) fail(ErrorKind::kConfig, where + " must be an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) fail(ErrorKind::kConfig, where + " must be a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) fail(ErrorKind::kConfig, where + " must be a string");
  }
  return v.get<T>();
}

}  // namespace onm

#endif  // ONM_JSON_FIELDS_HPP_

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

#ifndef ONM_ERRORS_HPP_
#define ONM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace onm {

enum class ErrorKind {
  kShape,         // input width / layout mismatch
  kState,         // operation called in the wrong state
  kNumeric,       // NaN / Inf encountered
  kDomain,        // argument outside its mathematical domain
  kConfig,        // invalid configuration
  kIndex,         // index out of range
  kInput,         // malformed or insufficient input data
  kNotFound,      // unknown resource
  kConflict,      // stale or concurrent request
  kPrecondition,  // a required artifact has not been produced yet
  kIo,            // file system failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace onm

#endif  // ONM_ERRORS_HPP_

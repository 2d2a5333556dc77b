/*
  Copyright 2026 The protoguide Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

  http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace pg {

// Mirrors pg_status in the C header; keep the numeric values in sync.
enum class ErrorKind : int {
  Parameter = 1,
  Step = 2,
  Contract = 3,
  Configuration = 4,
  Capability = 5,
  Parse = 6,
  Vocabulary = 7,
  Region = 8,
  Io = 9,
  Training = 10,
  Store = 11,
  Backend = 12,
};

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
  if (!cond) fail(kind, what);
}

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Step: return "step error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::Capability: return "capability error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Vocabulary: return "vocabulary error";
    case ErrorKind::Region: return "region error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Store: return "store error";
    case ErrorKind::Backend: return "backend error";
  }
  return "unknown error";
}

}  // namespace pg

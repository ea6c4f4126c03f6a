// Copyright 2026 The pixsig Authors
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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pixsig {

/// Failure categories. Each maps to one CLI exit code.
enum class ErrorKind {
  Config = 2,     ///< invalid configuration, shapes that do not chain
  Format = 3,     ///< malformed file, bad magic, truncated payload
  Spec = 3,       ///< trigger/dataset precondition violated
  Precondition = 3,
  Gate = 4,       ///< a quality gate (attack success, accuracy) failed
  Numeric = 5,    ///< NaN/Inf or a contract violation in numeric output
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct FormatError : Error {
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::Format, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

struct SpecError : Error {
  explicit SpecError(const std::string& what) : Error(ErrorKind::Spec, what) {}
};

struct PreconditionError : Error {
  explicit PreconditionError(const std::string& what) : Error(ErrorKind::Precondition, what) {}
};

struct GateError : Error {
  explicit GateError(const std::string& what) : Error(ErrorKind::Gate, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

}  // namespace pixsig

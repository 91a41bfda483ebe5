/*
 * Copyright 2026 The semshap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace semshap {

// Coarse failure classes. The CLI maps them onto exit codes.
enum class ErrorKind {
  kInput,       // bad files, dimension mismatches
  kConfig,      // out-of-range parameters
  kDomain,      // mathematically undefined requests
  kNumerical,   // solver breakdown
  kModel,       // model / bridge / protocol failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::kDomain, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(ErrorKind::kModel, what) {}
};

// Malformed or incompatible wire messages.
class ProtocolError : public ModelError {
 public:
  explicit ProtocolError(const std::string& what)
      : ModelError("protocol error: " + what) {}
};

// The model does not advertise the requested operation.
class CapabilityError : public ModelError {
 public:
  explicit CapabilityError(const std::string& what)
      : ModelError("capability error: " + what) {}
};

// Exit codes used by the command-line tool.
inline int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput:
    case ErrorKind::kConfig:
      return 1;
    case ErrorKind::kModel:
      return 2;
    case ErrorKind::kDomain:
    case ErrorKind::kNumerical:
      return 3;
  }
  return 1;
}

}  // namespace semshap

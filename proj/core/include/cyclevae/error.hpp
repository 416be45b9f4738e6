// Copyright 2026 The cyclevae Authors
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

#include <stdexcept>
#include <string>

namespace cyclevae {

/// Broad failure class. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kShape,       ///< incompatible tensor shapes
  kConfig,      ///< invalid configuration or usage
  kFormat,      ///< malformed file on disk
  kData,        ///< well-formed but unusable data
  kDivergence,  ///< NaN/Inf during training or evaluation
  kIo,          ///< filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kShape, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

/// Raised when a forward pass, loss or gradient becomes non-finite.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error(ErrorKind::kDivergence, what) {}
};

/// Structured binary-format failures for feature files and checkpoints.
class FormatError : public Error {
 public:
  enum class Code { kBadMagic, kUnsupportedVersion, kDimMismatch, kTruncated, kCorrupt };

  FormatError(Code code, const std::string& what)
      : Error(ErrorKind::kFormat, what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace cyclevae

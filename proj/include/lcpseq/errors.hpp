/*
 * Copyright 2026 The lcpseq Authors.
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

namespace lcpseq {

/// Root of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition of the called operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input values are outside the domain of the operation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Text input could not be parsed. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Text input parsed but has the wrong number of columns.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Binary file does not start with the expected magic or version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Binary file is truncated or fails its checksum.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Configuration is inconsistent with the data or checkpoint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lcpseq

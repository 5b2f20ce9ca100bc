// Copyright 2026 The MAM Speech Authors.
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

namespace mam {

/// Base class of every error raised by the library. The C API maps each
/// subclass onto a distinct status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (empty selection, bad range...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content is malformed, truncated or corrupt.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mam

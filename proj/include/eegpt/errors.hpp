// Copyright 2026 The EEGPT-desk Authors. All Rights Reserved.
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

#ifndef EEGPT_ERRORS_HPP_
#define EEGPT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace eegpt {

/// Root of every error thrown by the library. The CLI maps the three broad
/// families (config, data, numeric) onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -- configuration family (exit code 2) -------------------------------------
class ConfigError : public Error {
 public:
  using Error::Error;
};

// -- data family (exit code 3) ----------------------------------------------
class DataError : public Error {
 public:
  using Error::Error;
};
class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};
class VersionError : public DataError {
 public:
  using DataError::DataError;
};
class TruncationError : public DataError {
 public:
  using DataError::DataError;
};
class TaskError : public DataError {
 public:
  using DataError::DataError;
};

// -- numeric family (exit code 4) -------------------------------------------
class NumericError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

// -- programming contract violations ----------------------------------------
class ContractError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};
class LengthError : public ContractError {
 public:
  using ContractError::ContractError;
};
class DeterminismError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace eegpt

#endif  // EEGPT_ERRORS_HPP_

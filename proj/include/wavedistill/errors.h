// Copyright 2026 The WaveDistill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WAVEDISTILL_ERRORS_H_
#define WAVEDISTILL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace wavedistill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible or invalid tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or a numerical precondition violated.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autodiff graph (double backward, non-scalar loss, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or inconsistent settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File system and format failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace wavedistill

#endif  // WAVEDISTILL_ERRORS_H_

/*
 * Copyright 2026 The LIVAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LIVAR_ERRORS_HPP_
#define LIVAR_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace livar {

/// Incompatible shapes passed to a matrix or aggregation operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid experiment configuration; the message names the offending field.
/// Maps to process exit code 2 in the CLI.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numeric breakdown at run time (non-finite loss, solver failure).
/// Maps to process exit code 3 in the CLI.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace livar

#endif  // LIVAR_ERRORS_HPP_

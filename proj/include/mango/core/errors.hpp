// Copyright 2026 The Mango Authors. All Rights Reserved.
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

namespace mango {

/// Bad shapes, out-of-range values, violated preconditions.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unknown registry ids, incompatible checkpoints, unusable datasets.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or corrupt files. The message always names the file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internally inconsistent data (frame counts, split overlap, blob sizes).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MANGO_CHECK_ARG(cond, msg)                 \
  do {                                             \
    if (!(cond)) throw ::mango::ArgumentError(msg); \
  } while (0)

}  // namespace mango

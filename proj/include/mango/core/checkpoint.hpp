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

#include <filesystem>

#include "mango/core/io.hpp"
#include "mango/core/nn.hpp"

namespace mango::ckpt {

/// Writes `manifest` (plus a "params" table of name/shape/offset) to
/// manifest.json and every parameter, in order, to weights.f32.
void write(const std::filesystem::path& dir, io::Json manifest, const nn::ParameterSet& params);

io::Json read_manifest(const std::filesystem::path& dir);

/// Loads weights.f32 into `params`. Names and shapes must match the manifest
/// exactly, otherwise ConfigError.
void load_weights(const std::filesystem::path& dir, const io::Json& manifest, nn::ParameterSet& params);

}  // namespace mango::ckpt

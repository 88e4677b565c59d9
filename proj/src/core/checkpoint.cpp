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

#include "mango/core/checkpoint.hpp"

#include "mango/core/errors.hpp"

namespace mango::ckpt {

void write(const std::filesystem::path& dir, io::Json manifest, const nn::ParameterSet& params) {
  std::filesystem::create_directories(dir);
  io::Json table = io::Json::array();
  std::vector<float> blob;
  blob.reserve(static_cast<size_t>(params.scalar_count()));
  for (const auto& [name, t] : params.items()) {
    table.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", blob.size()}});
    auto v = io::to_f32(t.value());
    blob.insert(blob.end(), v.begin(), v.end());
  }
  manifest["params"] = table;
  manifest["weights"] = "weights.f32";
  manifest["scalar_count"] = blob.size();
  io::write_json(dir / "manifest.json", manifest);
  io::write_f32(dir / "weights.f32", blob);
}

io::Json read_manifest(const std::filesystem::path& dir) { return io::read_json(dir / "manifest.json"); }

void load_weights(const std::filesystem::path& dir, const io::Json& manifest, nn::ParameterSet& params) {
  const auto path = dir / manifest.value("weights", std::string("weights.f32"));
  const auto& table = manifest.at("params");
  if (table.size() != params.size()) {
    throw ConfigError(dir.string() + ": checkpoint has " + std::to_string(table.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  const Mat all = io::read_f32_matrix(path, 1, static_cast<Index>(manifest.at("scalar_count").get<size_t>()));
  auto& items = params.items();
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& entry = table[i];
    auto& [name, t] = items[i];
    const Index rows = entry.at("rows").get<Index>(), cols = entry.at("cols").get<Index>();
    if (entry.at("name").get<std::string>() != name || rows != t.rows() || cols != t.cols()) {
      throw ConfigError(dir.string() + ": tensor " + std::to_string(i) + " (" + entry.at("name").get<std::string>() +
                        ") does not match model tensor " + name);
    }
    const Index off = entry.at("offset").get<Index>();
    if (off + rows * cols > all.cols()) throw ValidationError(path.string() + ": tensor extends past end of blob");
    t.mutable_value() = Eigen::Map<const Mat>(all.data() + off, rows, cols);
  }
}

}  // namespace mango::ckpt

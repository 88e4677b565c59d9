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

#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "helpers.hpp"
#include "mango/cli.hpp"
#include "mango/core/io.hpp"

using namespace mango;

namespace {

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "mango");
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

}  // namespace

TEST_CASE("command list") {
  const auto names = cli::command_names();
  CHECK(names.size() == 10);
  for (const char* n : {"synth-data", "train-stage1", "train-stage2", "train-joint", "generate", "render", "evaluate",
                        "perturb-indicator", "robustness-sweep", "lip-curve"}) {
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  }
}

TEST_CASE("bad invocations exit with the validation code") {
  std::string err;
  CHECK(run({}, nullptr, &err) == cli::kExitValidation);
  CHECK(run({"frobnicate"}) == cli::kExitValidation);
  CHECK(run({"perturb-indicator", "--alpha", "2", "--clip", "/nonexistent"}) != cli::kExitOk);
  CHECK(run({"evaluate", "--pred", "/nonexistent", "--gt", "/nonexistent"}) != cli::kExitOk);
}

TEST_CASE("synth, perturb and lip-curve through the library entry point") {
  const auto dir = test::scratch("cli_lib");
  REQUIRE(run({"synth-data", "--out", (dir / "data").string(), "--clips", "3", "--seconds", "1", "--val", "1",
               "--test", "1", "--no-frames", "--seed", "4"}) == cli::kExitOk);
  CHECK(std::filesystem::exists(dir / "data" / "manifest.json"));
  const auto manifest = io::read_json(dir / "data" / "manifest.json");
  const std::string clip = (dir / "data" / manifest.at("paths").at(manifest.at("test")[0].get<std::string>()).get<std::string>()).string();
  REQUIRE(run({"perturb-indicator", "--clip", clip, "--alpha", "0.2", "--out", (dir / "flip.bin").string()}) ==
          cli::kExitOk);
  CHECK(std::filesystem::file_size(dir / "flip.bin") == 25);
  REQUIRE(run({"lip-curve", "--clip", clip, "--out", (dir / "curve").string()}) == cli::kExitOk);
}

TEST_CASE("installed binary responds to help") {
  const std::string cmd = std::string(MANGO_CLI_PATH) + " --help > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
}

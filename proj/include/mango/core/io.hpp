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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mango/core/tensor.hpp"

namespace mango::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

std::vector<uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes);

// Little-endian float32 blobs. Values are rounded to float on write.
std::vector<float> read_f32(const fs::path& path);
void write_f32(const fs::path& path, const float* data, size_t count);
void write_f32(const fs::path& path, const std::vector<float>& values);
std::vector<float> to_f32(const Mat& m);
// Throws ValidationError naming the file when the byte count differs.
Mat read_f32_matrix(const fs::path& path, Index rows, Index cols);
void write_f32_matrix(const fs::path& path, const Mat& m);
// Rounds every entry to the nearest float so later float32 saves are exact.
void round_to_f32(Mat& m);

Json read_json(const fs::path& path);
// Pretty-printed with sorted keys and a trailing newline; byte-stable.
void write_json(const fs::path& path, const Json& j);

/// 8-bit RGB image with values in [0, 1], stored (H*W) x 3.
struct Image {
  int width = 0;
  int height = 0;
  Mat pixels;
};
Image read_png(const fs::path& path);
void write_png(const fs::path& path, const Image& image);
// Rounds to the 8-bit grid that PNG stores.
void quantize8(Image& image);

/// PCM16 mono WAV.
struct Wav {
  int sample_rate = 16000;
  std::vector<double> samples;
};
Wav read_wav(const fs::path& path);
void write_wav(const fs::path& path, const Wav& wav);
// Rounds samples to the PCM16 grid.
void quantize16(std::vector<double>& samples);

}  // namespace mango::io

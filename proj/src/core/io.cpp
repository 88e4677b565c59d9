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

#include "mango/core/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mango/core/errors.hpp"

namespace mango::io {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

std::vector<uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> read_f32(const fs::path& path) {
  auto bytes = read_bytes(path);
  if (bytes.size() % 4 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 4");
  }
  std::vector<float> v(bytes.size() / 4);
  std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

void write_f32(const fs::path& path, const float* data, size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

void write_f32(const fs::path& path, const std::vector<float>& values) {
  write_f32(path, values.data(), values.size());
}

std::vector<float> to_f32(const Mat& m) {
  std::vector<float> v(static_cast<size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) v[static_cast<size_t>(i)] = static_cast<float>(m.data()[i]);
  return v;
}

Mat read_f32_matrix(const fs::path& path, Index rows, Index cols) {
  if (!fs::exists(path)) throw FormatError("missing file " + path.string());
  const auto size = fs::file_size(path);
  const auto expected = static_cast<uintmax_t>(rows * cols) * 4;
  if (size != expected) {
    throw ValidationError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(size));
  }
  auto v = read_f32(path);
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = v[static_cast<size_t>(i)];
  return m;
}

void write_f32_matrix(const fs::path& path, const Mat& m) { write_f32(path, to_f32(m)); }

void round_to_f32(Mat& m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Image read_png(const fs::path& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw FormatError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    std::fclose(fp);
    throw FormatError("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw FormatError("corrupt PNG " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Image img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  const size_t stride = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(stride * static_cast<size_t>(img.height));
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<size_t>(y)] = buf.data() + stride * static_cast<size_t>(y);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  img.pixels.resize(static_cast<Index>(img.width) * img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.pixels(static_cast<Index>(y) * img.width + x, c) = rows[static_cast<size_t>(y)][x * 3 + c] / 255.0;
  return img;
}

void write_png(const fs::path& path, const Image& image) {
  if (image.pixels.rows() != static_cast<Index>(image.width) * image.height || image.pixels.cols() != 3) {
    throw ArgumentError("write_png: image buffer does not match its dimensions");
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw FormatError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    std::fclose(fp);
    throw FormatError("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw FormatError("failed writing PNG " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = image.pixels(static_cast<Index>(y) * image.width + x, c);
        row[static_cast<size_t>(x * 3 + c)] = static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void quantize8(Image& image) {
  for (Index i = 0; i < image.pixels.size(); ++i) {
    double& v = image.pixels.data()[i];
    v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  }
}

namespace {

uint32_t le32(const uint8_t* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24); }
uint16_t le16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
void put32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
int16_t to_pcm16(double s) {
  return static_cast<int16_t>(std::clamp<long>(std::lround(s * 32768.0), -32768, 32767));
}

}  // namespace

Wav read_wav(const fs::path& path) {
  auto b = read_bytes(path);
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) || std::memcmp(b.data() + 8, "WAVE", 4)) {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }
  Wav wav;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const uint32_t len = le32(b.data() + pos + 4);
    const uint8_t* body = b.data() + pos + 8;
    if (pos + 8 + len > b.size()) throw FormatError(path.string() + ": truncated chunk");
    if (!std::memcmp(b.data() + pos, "fmt ", 4)) {
      if (len < 16) throw FormatError(path.string() + ": short fmt chunk");
      const uint16_t format = le16(body), channels = le16(body + 2), bits = le16(body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw FormatError(path.string() + ": only PCM16 mono is supported");
      }
      wav.sample_rate = static_cast<int>(le32(body + 4));
      have_fmt = true;
    } else if (!std::memcmp(b.data() + pos, "data", 4)) {
      if (!have_fmt) throw FormatError(path.string() + ": data chunk before fmt");
      wav.samples.resize(len / 2);
      for (size_t i = 0; i < wav.samples.size(); ++i) {
        wav.samples[i] = static_cast<int16_t>(le16(body + 2 * i)) / 32768.0;
      }
      return wav;
    }
    pos += 8 + len + (len & 1);
  }
  throw FormatError(path.string() + ": no data chunk");
}

void write_wav(const fs::path& path, const Wav& wav) {
  const uint32_t data_len = static_cast<uint32_t>(wav.samples.size() * 2);
  std::vector<uint8_t> b;
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, static_cast<uint32_t>(wav.sample_rate));
  put32(b, static_cast<uint32_t>(wav.sample_rate * 2));
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_len);
  for (double s : wav.samples) put16(b, static_cast<uint16_t>(to_pcm16(s)));
  write_bytes(path, b);
}

void quantize16(std::vector<double>& samples) {
  for (double& s : samples) s = to_pcm16(s) / 32768.0;
}

}  // namespace mango::io

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

#include "helpers.hpp"
#include "mango/audio.hpp"
#include "mango/core/errors.hpp"
#include "mango/core/io.hpp"

using namespace mango;
using namespace mango::audio;

namespace {

AudioTrack tone(double seconds, double freq, double amp = 0.3) {
  AudioTrack t;
  const auto n = static_cast<size_t>(seconds * kSampleRate);
  for (size_t i = 0; i < n; ++i) t.samples.push_back(amp * std::sin(2 * M_PI * freq * static_cast<double>(i) / kSampleRate));
  return t;
}

}  // namespace

TEST_CASE("four seconds of audio give 100 feature frames of width 768") {
  const AudioTrack t = tone(4.0, 440.0);
  CHECK(frame_count(t) == 100);
  const FeatureSequence f = encode(t, "desk", 100);
  CHECK(f.frames() == 100);
  CHECK(f.features.cols() == 768);
  CHECK(f.features.allFinite());
}

TEST_CASE("encoder is deterministic and time-invariant on silence") {
  AudioTrack z;
  z.samples.assign(2 * kSampleRate, 0.0);
  const Mat a = encode(z, "desk", 50).features;
  const Mat b = encode(z, "desk", 50).features;
  CHECK(a == b);
  for (Index t = 1; t < a.rows(); ++t) CHECK((a.row(t) - a.row(0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("encoder errors") {
  CHECK_THROWS_AS(encode(tone(1.0, 200.0), "hubert", 25), ConfigError);
  CHECK_THROWS_AS(encode(AudioTrack{}, "desk", 25), ArgumentError);
  CHECK_THROWS_AS(make_encoder("nope"), ConfigError);
}

TEST_CASE("custom encoders plug into the registry and are resampled to the frame grid") {
  struct Ramp : Encoder {
    double native_rate() const override { return 50.0; }
    Index dim() const override { return kFeatureDim; }
    Mat encode_native(const AudioTrack& t) const override {
      const Index n = static_cast<Index>(t.samples.size() * 50 / t.sample_rate);
      Mat m(n, kFeatureDim);
      for (Index i = 0; i < n; ++i) m.row(i).setConstant(static_cast<double>(i));
      return m;
    }
  };
  register_encoder("ramp-test", [] { return std::make_unique<Ramp>(); });
  const FeatureSequence f = encode(tone(2.0, 100.0), "ramp-test", 50);
  CHECK(f.frames() == 50);
  // linear ramp stays linear after linear resampling
  const double step = f.features(1, 0) - f.features(0, 0);
  for (Index t = 2; t < 49; ++t) CHECK(f.features(t, 0) - f.features(t - 1, 0) == doctest::Approx(step));
}

TEST_CASE("linear resampling samples frame centers and clamps the tail") {
  Mat native(5, 2);
  for (Index i = 0; i < 5; ++i) native.row(i) << i, -2.0 * i;
  const Mat r = resample_linear(native, 2.0, 3, 1.0);
  CHECK(r.rows() == 3);
  CHECK(r(0, 0) == doctest::Approx(1.0));
  CHECK(r(1, 0) == doctest::Approx(3.0));
  CHECK(r(2, 1) == doctest::Approx(-8.0));
}

TEST_CASE("frame RMS matches a per-frame loop") {
  const AudioTrack t = tone(1.0, 300.0, 0.5);
  const Vec rms = frame_rms(t, 25);
  for (Index f = 0; f < 25; ++f) {
    double acc = 0;
    for (Index i = 0; i < 640; ++i) acc += std::pow(t.samples[static_cast<size_t>(f * 640 + i)], 2);
    CHECK(rms(f) == doctest::Approx(std::sqrt(acc / 640)).epsilon(1e-12));
  }
}

TEST_CASE("log-mel has 80 bins at 100 Hz") {
  const Mat m = log_mel(tone(1.0, 1000.0));
  CHECK(m.cols() == 80);
  CHECK(std::abs(m.rows() - 100) <= 2);
  CHECK(m.allFinite());
}

TEST_CASE("WAV round-trip through PCM16") {
  const auto dir = test::scratch("wav");
  AudioTrack t = tone(0.5, 220.0);
  save_wav(t, dir / "a.wav");
  const AudioTrack l = load_wav(dir / "a.wav");
  CHECK(l.sample_rate == kSampleRate);
  REQUIRE(l.samples.size() == t.samples.size());
  for (size_t i = 0; i < t.samples.size(); ++i) CHECK(std::abs(l.samples[i] - t.samples[i]) <= 1.0 / 32767);
  save_wav(l, dir / "b.wav");
  CHECK(io::read_bytes(dir / "a.wav") == io::read_bytes(dir / "b.wav"));
}

TEST_CASE("indicator validation") {
  IndicatorTrack ok{{0, 1, 1, 0}};
  CHECK_NOTHROW(ok.validate());
  IndicatorTrack bad{{0, 2}};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("DIM fusion keeps frame count and width 513") {
  nn::Rng rng(3);
  DimConfig c;
  c.proj_dim = 16;
  c.heads = 2;
  c.ff_hidden = 32;
  c.input_dim = 12;
  DualAudioInteraction dim(c, rng);
  CHECK(dim.output_dim() == 33);
  const Mat hs = test::random_mat(7, 12, 1), ho = test::random_mat(7, 12, 2);
  const std::vector<uint8_t> ind{0, 1, 1, 0, 0, 1, 0};
  const Mat out = dim.forward(ag::Tensor::constant(hs), ag::Tensor::constant(ho), ind).value();
  CHECK(out.rows() == 7);
  CHECK(out.cols() == 33);

  nn::Rng rng2(4);
  DualAudioInteraction full(DimConfig{}, rng2);
  CHECK(full.output_dim() == kFusedDim);
}

TEST_CASE("DIM output at frame t is sensitive to the agent's own features at t") {
  nn::Rng rng(5);
  DimConfig c;
  c.proj_dim = 16;
  c.heads = 2;
  c.ff_hidden = 32;
  c.input_dim = 12;
  DualAudioInteraction dim(c, rng);
  const Mat hs = test::random_mat(6, 12, 3), ho = test::random_mat(6, 12, 4);
  const std::vector<uint8_t> ind{1, 1, 0, 0, 1, 0};
  auto f = [&](const Mat& x) {
    return dim.forward(ag::Tensor::constant(x), ag::Tensor::constant(ho), ind).value().row(3).sum();
  };
  double total = 0.0;
  for (Index k = 0; k < 12; ++k) total += std::abs(test::central_diff(f, hs, 3, k, 1e-5));
  CHECK(total > 1e-6);
}

TEST_CASE("dim_fuse checks frame alignment") {
  nn::Rng rng(6);
  DimConfig c;
  c.proj_dim = 8;
  c.heads = 2;
  c.ff_hidden = 16;
  c.input_dim = 4;
  DualAudioInteraction dim(c, rng);
  FeatureSequence a{test::random_mat(5, 4, 1)}, b{test::random_mat(4, 4, 2)};
  IndicatorTrack ind{{0, 0, 1, 1, 0}};
  CHECK_THROWS_AS(dim_fuse(a, b, ind, dim), ArgumentError);
  b.features = test::random_mat(5, 4, 3);
  CHECK(dim_fuse(a, b, ind, dim).frames() == 5);
}

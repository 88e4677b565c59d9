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

// Audio loading, frame-aligned feature encoders and the dual-audio
// interaction module that fuses both speakers' features with the
// speaking indicator.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mango/core/nn.hpp"

namespace mango::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr double kFrameRate = 25.0;
inline constexpr Index kFeatureDim = 768;
inline constexpr Index kFusedDim = 513;

struct AudioTrack {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
  void validate() const;
};

struct FeatureSequence {
  Mat features;  // T x d
  double frame_rate = kFrameRate;
  Index frames() const { return features.rows(); }
};

struct IndicatorTrack {
  std::vector<uint8_t> bits;  // 1 = the agent is speaking
  size_t size() const { return bits.size(); }
  void validate() const;
};

AudioTrack load_wav(const std::filesystem::path& path);
void save_wav(const AudioTrack& track, const std::filesystem::path& path);

/// Number of video frames covered by `track` at `fps` (rounded to nearest).
Index frame_count(const AudioTrack& track, double fps = kFrameRate);
/// Per-frame RMS over consecutive sample blocks of sample_rate / fps.
Vec frame_rms(const AudioTrack& track, Index frames, double fps = kFrameRate);

/// 80-bin log-mel filterbank, 25 ms Hann window, 10 ms hop, edge-padded so a
/// constant signal yields identical frames.
Mat log_mel(const AudioTrack& track, Index num_mels = 80);

/// Linear interpolation along time from a native frame rate onto `frames`
/// target frames at `fps`. Native frame i is centred at i / native_rate
/// seconds; target frame t at (t + 0.5) / fps.
Mat resample_linear(const Mat& native, double native_rate, Index frames, double fps = kFrameRate);

/// Pluggable speech encoder producing features at its own native rate.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual double native_rate() const = 0;
  virtual Index dim() const = 0;
  virtual Mat encode_native(const AudioTrack& track) const = 0;
};

using EncoderFactory = std::function<std::unique_ptr<Encoder>()>;
void register_encoder(const std::string& id, EncoderFactory factory);
std::unique_ptr<Encoder> make_encoder(const std::string& id);
std::vector<std::string> encoder_ids();

/// Log-mel followed by a fixed-seed two-layer temporal convolution to 768
/// channels. Registered as "desk".
class DeskEncoder : public Encoder {
 public:
  explicit DeskEncoder(uint64_t seed = 0x5eed);
  double native_rate() const override { return 100.0; }
  Index dim() const override { return kFeatureDim; }
  Mat encode_native(const AudioTrack& track) const override;

 private:
  Mat w1_, w2_;
  RowVec b1_, b2_;
};

FeatureSequence encode(const AudioTrack& track, const std::string& encoder_id, Index frames);

struct DimConfig {
  Index input_dim = kFeatureDim;
  Index proj_dim = 256;
  Index heads = 8;
  Index layers = 2;
  Index ff_hidden = 1024;
};

/// Projects both streams, runs a self-attention encoder over the joint
/// sequence, adds the projected agent stream back onto its half, appends the
/// indicator bit and mixes with a final linear layer. Output width 2p + 1.
class DualAudioInteraction {
 public:
  DualAudioInteraction() = default;
  DualAudioInteraction(const DimConfig& config, nn::Rng& rng);

  const DimConfig& config() const { return config_; }
  Index output_dim() const { return 2 * config_.proj_dim + 1; }

  ag::Tensor forward(const ag::Tensor& h_self, const ag::Tensor& h_other, const std::vector<uint8_t>& indicator) const;
  void collect(nn::ParameterSet& ps, const std::string& prefix) const;

 private:
  DimConfig config_;
  nn::Linear proj_self_, proj_other_;
  std::vector<nn::EncoderLayer> layers_;
  nn::LayerNorm norm_;
  nn::Linear mix_;
};

FeatureSequence dim_fuse(const FeatureSequence& h_self, const FeatureSequence& h_other,
                         const IndicatorTrack& indicator, const DualAudioInteraction& dim);

}  // namespace mango::audio

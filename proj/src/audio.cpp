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

#include "mango/audio.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "mango/core/errors.hpp"
#include "mango/core/io.hpp"

namespace mango::audio {
namespace {

constexpr int kWindow = 400;
constexpr int kHop = 160;
constexpr int kFft = 512;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelTables {
  Mat cos_t, sin_t;  // window x bins, Hann applied
  Mat filters;       // bins x mels
};

const MelTables& mel_tables(Index num_mels, int sample_rate) {
  static std::mutex mu;
  static std::map<std::pair<Index, int>, MelTables> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(num_mels, sample_rate);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const int bins = kFft / 2 + 1;
  MelTables t;
  t.cos_t.resize(kWindow, bins);
  t.sin_t.resize(kWindow, bins);
  for (int n = 0; n < kWindow; ++n) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / kWindow);
    for (int k = 0; k < bins; ++k) {
      const double ang = 2.0 * M_PI * k * n / kFft;
      t.cos_t(n, k) = hann * std::cos(ang);
      t.sin_t(n, k) = hann * std::sin(ang);
    }
  }
  t.filters = Mat::Zero(bins, num_mels);
  const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(num_mels + 2));
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(num_mels + 1));
  }
  for (int k = 0; k < bins; ++k) {
    const double hz = static_cast<double>(k) * sample_rate / kFft;
    for (Index m = 0; m < num_mels; ++m) {
      const double lo = edges[static_cast<size_t>(m)], mid = edges[static_cast<size_t>(m + 1)],
                   hi = edges[static_cast<size_t>(m + 2)];
      double w = 0.0;
      if (hz >= lo && hz <= mid && mid > lo) w = (hz - lo) / (mid - lo);
      if (hz > mid && hz <= hi && hi > mid) w = (hi - hz) / (hi - mid);
      t.filters(k, m) = w;
    }
  }
  return cache.emplace(key, std::move(t)).first->second;
}

// 1-D convolution over time with kernel 3 and replicate padding.
// weight: (3 * in) x out, row block k applies to frame t + k - 1.
Mat temporal_conv(const Mat& x, const Mat& weight, const RowVec& bias) {
  const Index t_len = x.rows(), c = x.cols();
  Mat col(t_len, 3 * c);
  for (Index t = 0; t < t_len; ++t)
    for (Index k = 0; k < 3; ++k) {
      const Index src = std::clamp<Index>(t + k - 1, 0, t_len - 1);
      col.block(t, k * c, 1, c) = x.row(src);
    }
  Mat out = col * weight;
  out.rowwise() += bias;
  return out;
}

std::map<std::string, EncoderFactory>& registry() {
  static std::map<std::string, EncoderFactory> r = {
      {"desk", [] { return std::unique_ptr<Encoder>(new DeskEncoder()); }}};
  return r;
}
std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

void AudioTrack::validate() const {
  if (sample_rate <= 0) throw ArgumentError("audio sample rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) throw ArgumentError("audio contains non-finite samples");
}

void IndicatorTrack::validate() const {
  for (uint8_t b : bits)
    if (b > 1) throw ArgumentError("indicator values must be 0 or 1");
}

AudioTrack load_wav(const std::filesystem::path& path) {
  io::Wav w = io::read_wav(path);
  return AudioTrack{std::move(w.samples), w.sample_rate};
}

void save_wav(const AudioTrack& track, const std::filesystem::path& path) {
  io::write_wav(path, io::Wav{track.sample_rate, track.samples});
}

Index frame_count(const AudioTrack& track, double fps) {
  return static_cast<Index>(std::llround(static_cast<double>(track.samples.size()) * fps / track.sample_rate));
}

Vec frame_rms(const AudioTrack& track, Index frames, double fps) {
  Vec rms = Vec::Zero(frames);
  const double per = track.sample_rate / fps;
  for (Index t = 0; t < frames; ++t) {
    const auto lo = static_cast<size_t>(std::llround(t * per));
    const auto hi = std::min(track.samples.size(), static_cast<size_t>(std::llround((t + 1) * per)));
    double acc = 0.0;
    for (size_t i = lo; i < hi; ++i) acc += track.samples[i] * track.samples[i];
    rms(t) = hi > lo ? std::sqrt(acc / static_cast<double>(hi - lo)) : 0.0;
  }
  return rms;
}

Mat log_mel(const AudioTrack& track, Index num_mels) {
  if (track.samples.empty()) throw ArgumentError("log_mel: empty audio");
  const MelTables& tab = mel_tables(num_mels, track.sample_rate);
  const Index n = static_cast<Index>(track.samples.size());
  const Index frames = 1 + n / kHop;
  Mat windows(frames, kWindow);
  for (Index f = 0; f < frames; ++f) {
    for (int i = 0; i < kWindow; ++i) {
      const Index src = std::clamp<Index>(f * kHop + i - kWindow / 2, 0, n - 1);
      windows(f, i) = track.samples[static_cast<size_t>(src)];
    }
  }
  Mat re = windows * tab.cos_t;
  Mat im = windows * tab.sin_t;
  Mat power = re.array().square() + im.array().square();
  Mat mel = power * tab.filters;
  return ((mel.array() + 1e-8).log() + 8.0) / 4.0;
}

Mat resample_linear(const Mat& native, double native_rate, Index frames, double fps) {
  if (native.rows() == 0) throw ArgumentError("resample_linear: empty input");
  Mat out(frames, native.cols());
  const Index last = native.rows() - 1;
  for (Index t = 0; t < frames; ++t) {
    const double pos = (static_cast<double>(t) + 0.5) / fps * native_rate;
    const double clamped = std::clamp(pos, 0.0, static_cast<double>(last));
    const Index i0 = static_cast<Index>(std::floor(clamped));
    const Index i1 = std::min(i0 + 1, last);
    const double a = clamped - static_cast<double>(i0);
    out.row(t) = (1.0 - a) * native.row(i0) + a * native.row(i1);
  }
  return out;
}

void register_encoder(const std::string& id, EncoderFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[id] = std::move(factory);
}

std::unique_ptr<Encoder> make_encoder(const std::string& id) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  auto it = registry().find(id);
  if (it == registry().end()) throw ConfigError("unknown audio encoder '" + id + "'");
  return it->second();
}

std::vector<std::string> encoder_ids() {
  std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> ids;
  for (const auto& [k, _] : registry()) ids.push_back(k);
  return ids;
}

DeskEncoder::DeskEncoder(uint64_t seed) {
  nn::Rng rng(seed);
  const Index mels = 80, hidden = 256;
  w1_ = nn::randn(3 * mels, hidden, rng, 1.0 / std::sqrt(3.0 * mels));
  b1_ = nn::randn(1, hidden, rng, 0.1).row(0);
  w2_ = nn::randn(3 * hidden, kFeatureDim, rng, std::sqrt(2.0 / (3.0 * hidden)));
  b2_ = nn::randn(1, kFeatureDim, rng, 0.1).row(0);
}

Mat DeskEncoder::encode_native(const AudioTrack& track) const {
  Mat mel = log_mel(track, 80);
  Mat h = temporal_conv(mel, w1_, b1_).cwiseMax(0.0);
  return temporal_conv(h, w2_, b2_);
}

FeatureSequence encode(const AudioTrack& track, const std::string& encoder_id, Index frames) {
  auto enc = make_encoder(encoder_id);
  if (track.samples.empty()) throw ArgumentError("encode: empty audio");
  track.validate();
  if (frames <= 0) throw ArgumentError("encode: target frame count must be positive");
  Mat native = enc->encode_native(track);
  FeatureSequence out;
  out.features = resample_linear(native, enc->native_rate(), frames, kFrameRate);
  return out;
}

DualAudioInteraction::DualAudioInteraction(const DimConfig& config, nn::Rng& rng)
    : config_(config),
      proj_self_(config.input_dim, config.proj_dim, rng),
      proj_other_(config.input_dim, config.proj_dim, rng),
      norm_(2 * config.proj_dim),
      mix_(2 * config.proj_dim + 1, 2 * config.proj_dim + 1, rng) {
  for (Index l = 0; l < config.layers; ++l) {
    layers_.emplace_back(2 * config.proj_dim, config.heads, config.ff_hidden, rng);
  }
}

ag::Tensor DualAudioInteraction::forward(const ag::Tensor& h_self, const ag::Tensor& h_other,
                                         const std::vector<uint8_t>& indicator) const {
  const Index t_len = h_self.rows();
  if (h_other.rows() != t_len || static_cast<Index>(indicator.size()) != t_len) {
    throw ArgumentError("dim_fuse: self/other/indicator lengths differ");
  }
  if (h_self.cols() != config_.input_dim || h_other.cols() != config_.input_dim) {
    throw ArgumentError("dim_fuse: feature width mismatch");
  }
  const Index p = config_.proj_dim;
  ag::Tensor ps = proj_self_(h_self);
  ag::Tensor po = proj_other_(h_other);
  ag::Tensor x = ag::add(ag::concat_cols({ps, po}), ag::Tensor::constant(nn::sinusoidal_table(t_len, 2 * p)));
  for (const auto& layer : layers_) x = layer(x);
  x = norm_(x);
  // Residual onto the agent half keeps the agent stream undiluted.
  x = ag::add(x, ag::concat_cols({ps, ag::Tensor::constant(Mat::Zero(t_len, p))}));
  Mat bits(t_len, 1);
  for (Index t = 0; t < t_len; ++t) bits(t, 0) = indicator[static_cast<size_t>(t)] ? 1.0 : 0.0;
  return mix_(ag::concat_cols({x, ag::Tensor::constant(bits)}));
}

void DualAudioInteraction::collect(nn::ParameterSet& ps, const std::string& prefix) const {
  proj_self_.collect(ps, prefix + ".proj_self");
  proj_other_.collect(ps, prefix + ".proj_other");
  for (size_t l = 0; l < layers_.size(); ++l) layers_[l].collect(ps, prefix + ".layer" + std::to_string(l));
  norm_.collect(ps, prefix + ".norm");
  mix_.collect(ps, prefix + ".mix");
}

FeatureSequence dim_fuse(const FeatureSequence& h_self, const FeatureSequence& h_other,
                         const IndicatorTrack& indicator, const DualAudioInteraction& dim) {
  indicator.validate();
  ag::NoGradGuard no_grad;
  ag::Tensor out = dim.forward(ag::Tensor::constant(h_self.features), ag::Tensor::constant(h_other.features),
                               indicator.bits);
  return FeatureSequence{out.value(), h_self.frame_rate};
}

}  // namespace mango::audio

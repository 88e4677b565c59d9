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

// Windowed diffusion over motion parameters with clean-sample prediction,
// autoregressive window chaining and the stage-1 loss suite.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mango/audio.hpp"
#include "mango/core/nn.hpp"
#include "mango/morphable.hpp"

namespace mango::motiongen {

/// Cosine variance schedule. Step indices run 1..N; alpha_bar(0) == 1.
class DiffusionSchedule {
 public:
  DiffusionSchedule() : DiffusionSchedule(500) {}
  explicit DiffusionSchedule(int steps, double offset = 0.008);

  int steps() const { return steps_; }
  double offset() const { return offset_; }
  double beta(int n) const;
  double alpha(int n) const { return 1.0 - beta(n); }
  double alpha_bar(int n) const;

 private:
  int steps_;
  double offset_;
  Vec betas_;       // [n - 1]
  Vec alpha_bars_;  // [n], alpha_bars_[0] = 1
};

struct WindowConfig {
  Index prev = 10;
  Index curr = 100;
};

struct MotionWindow {
  Mat prev;  // w_p x D, clean
  Mat curr;  // w x D
};

/// X^n = sqrt(abar_n) X^0 + sqrt(1 - abar_n) z on the current frames only.
MotionWindow forward_diffuse(const MotionWindow& x0, int n, const DiffusionSchedule& schedule, nn::Rng& rng);
/// Same with an explicit noise draw (rows x D matching x0).
Mat forward_diffuse(const Mat& x0, int n, const DiffusionSchedule& schedule, const Mat& noise);

/// Motion token t may attend only to audio token t.
BoolMat cross_attention_mask(Index tokens);

struct DenoiserConfig {
  Index motion_dim = 56;
  Index cond_dim = audio::kFusedDim;
  Index shape_dim = 8;
  Index model_dim = 128;
  Index heads = 4;
  Index layers = 8;
  Index ff_hidden = 256;
};

/// Attention decoder over [prev | noisy] motion tokens plus one shape token,
/// cross-attending to the fused audio tokens through a diagonal mask.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, nn::Rng& rng);

  const DenoiserConfig& config() const { return config_; }

  // cond: (w_p + w) x cond_dim, prev: w_p x D, noisy: w x D. Returns the
  // predicted clean window, (w_p + w) x D.
  ag::Tensor forward(const ag::Tensor& cond, const Mat& prev, const ag::Tensor& noisy, int step, const Vec& beta,
                     std::vector<std::vector<Mat>>* cross_probs = nullptr) const;

  // Cross-attention of one decoder layer applied directly to `tokens`
  // (self-attention bypassed), returning the per-token context vectors.
  Mat cross_attention_context(int layer, const Mat& tokens, const Mat& cond) const;

  void collect(nn::ParameterSet& ps, const std::string& prefix) const;

 private:
  struct Layer {
    nn::LayerNorm ln_self, ln_cross, ln_ff;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::FeedForward ff;
  };
  ag::Tensor step_embedding(int step) const;

  DenoiserConfig config_;
  nn::Linear in_proj_, cond_proj_, shape_proj_, step_fc1_, step_fc2_, out_proj_;
  std::vector<Layer> layers_;
  nn::LayerNorm out_norm_;
};

struct Stage1Config {
  audio::DimConfig dim;
  DenoiserConfig denoiser;
  WindowConfig window;
  int diffusion_steps = 500;
  uint64_t seed = 1;
};

/// All stage-1 parameters: the dual-audio interaction module and the denoiser.
class Stage1Model {
 public:
  Stage1Model() = default;
  explicit Stage1Model(const Stage1Config& config);

  const Stage1Config& config() const { return config_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const audio::DualAudioInteraction& dim() const { return dim_; }
  const Denoiser& denoiser() const { return denoiser_; }
  nn::ParameterSet parameters() const;

  // Fused conditioning for a window: rows of h_self/h_other/indicator already
  // cut to w_p + w frames.
  ag::Tensor fuse(const Mat& h_self, const Mat& h_other, const std::vector<uint8_t>& indicator) const;

  void save(const std::filesystem::path& dir) const;
  static Stage1Model load(const std::filesystem::path& dir);

 private:
  Stage1Config config_;
  DiffusionSchedule schedule_;
  audio::DualAudioInteraction dim_;
  Denoiser denoiser_;
};

/// Predicted clean window (w_p + w) x D for a noisy current window at step n.
Mat denoise(const audio::FeatureSequence& fused, const Mat& prev, const Mat& noisy, int step, const Vec& beta,
            const Denoiser& params);

/// Returns the predicted clean window for a noisy current window at step n.
using DenoiseFn = std::function<Mat(const Mat& noisy_curr, int step)>;

/// Descending step list: all of N..1, or `stride_steps` evenly spaced steps.
std::vector<int> sampling_steps(const DiffusionSchedule& schedule, int stride_steps);

/// Ancestral sampling with the posterior mean computed from the predicted
/// clean sample. Returns only the current frames (w x D).
Mat sample_window(const DenoiseFn& denoise_fn, Index frames, Index dim, const DiffusionSchedule& schedule,
                  nn::Rng& rng, int stride_steps = 0, Index prev_frames = 0);

struct ClipFeatures {
  Mat h_self;   // T x 768
  Mat h_other;  // T x 768
  std::vector<uint8_t> indicator;
  Index frames() const { return h_self.rows(); }
};

ClipFeatures encode_clip(const audio::AudioTrack& self, const audio::AudioTrack& other,
                         const audio::IndicatorTrack& indicator, const std::string& encoder_id = "desk");

/// Window slice [start - w_p, start + w) with zero padding outside [0, T).
struct WindowInputs {
  Mat h_self, h_other;
  std::vector<uint8_t> indicator;
};
WindowInputs slice_window(const ClipFeatures& clip, Index start, const WindowConfig& window);

struct GenerateOptions {
  uint64_t seed = 0;
  int stride_steps = 0;  // 0 = full N-step reverse chain
};

/// Chains windows autoregressively; each window is conditioned on the last
/// w_p generated frames (zeros before the clip start). Output is T x D.
morphable::MotionSequence generate(const ClipFeatures& clip, const Vec& beta, const Stage1Model& model,
                                   const GenerateOptions& options);

struct Stage1Weights {
  double jaw = 0.2;
  double vert = 2e6;
  double vel = 1e7;
  double smooth = 1e4;
};

struct Stage1Loss {
  ag::Tensor total;
  double param = 0, jaw = 0, vert = 0, vel = 0, smooth = 0;
};

Stage1Loss stage1_loss(const ag::Tensor& pred, const Mat& gt, const Vec& beta, const morphable::MorphableModel& model,
                       const Stage1Weights& weights = {});

}  // namespace mango::motiongen

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
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mango/core/io.hpp"
#include "mango/dataio.hpp"
#include "mango/motiongen.hpp"
#include "mango/renderer.hpp"

namespace mango::training {

enum class Phase { kPretrain1, kPretrain2, kJoint };
Phase parse_phase(const std::string& id);
std::string phase_name(Phase p);

struct TrainConfig {
  Phase phase = Phase::kPretrain1;
  int stage1_iterations = 2000;
  int stage2_iterations = 2000;
  int joint_iterations = 500;
  int batch_stage1 = 16;
  int batch_stage2 = 6;
  int batch_joint = 2;
  double lr_stage1 = 1e-4;
  double lr_stage2 = 1e-4;
  std::string schedule_stage1 = "cosine";
  std::string schedule_stage2 = "warmup-decay";
  int warmup = 50;
  double clip_norm = 1.0;
  uint64_t seed = 1;
  int n_render_frames = 5;
  int joint_chain_steps = 5;
  // Stage-1 pretraining only: flip one segment of alpha ~ U[0, indicator_noise] of each window's indicator.
  double indicator_noise = 0.0;
  motiongen::Stage1Weights stage1_weights;
  renderer::Stage2Weights stage2_weights;
  std::string audio_encoder = "desk";
  int log_every = 1;

  // Throws ConfigError for non-positive counts, n_render_frames > window or indicator_noise outside [0, 1].
  void validate(const motiongen::WindowConfig& window) const;
  io::Json to_json() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static TrainConfig from_json(const io::Json& j, TrainConfig base);
  static TrainConfig from_json(const io::Json& j);
};

// One JSON object per line: {"iter", "phase", "losses", ...}.
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(std::ostream* sink) : sink_(sink) {}
  void write(const io::Json& record);
  const std::vector<io::Json>& records() const { return records_; }

 private:
  std::ostream* sink_ = nullptr;
  std::vector<io::Json> records_;
};

// Per-clip data that does not change during training.
struct PreparedClip {
  const dataio::DialogueClip* clip = nullptr;
  motiongen::ClipFeatures features;
  renderer::RefEncoding reference;
  Mat posed;      // T x 3V, with head pose, for rendering
  Index ref_frame = 0;
};
std::vector<PreparedClip> prepare(const std::vector<dataio::DialogueClip>& clips,
                                  const morphable::MorphableModel& model, const std::string& audio_encoder,
                                  const std::string& image_encoder, bool need_frames);

struct LossCurve {
  std::vector<double> total;
  std::vector<double> param;  // stage 1
  std::vector<double> pho;    // stage 2
};

LossCurve pretrain_stage1(motiongen::Stage1Model& model, const std::vector<dataio::DialogueClip>& clips,
                          const morphable::MorphableModel& morph, const TrainConfig& config, TrainLog* log = nullptr);
LossCurve pretrain_stage2(renderer::Stage2Model& model, const std::vector<dataio::DialogueClip>& clips,
                          const morphable::MorphableModel& morph, const TrainConfig& config, TrainLog* log = nullptr);

struct JointReport {
  LossCurve stage1;  // L_J per stage-1 step
  LossCurve stage2;  // L_stage2 per stage-2 step
  bool stage2_untouched_by_stage1_steps = true;
  bool stage1_untouched_by_stage2_steps = true;
};
JointReport joint_train(motiongen::Stage1Model& stage1, renderer::Stage2Model& stage2,
                        const std::vector<dataio::DialogueClip>& clips, const morphable::MorphableModel& morph,
                        const TrainConfig& config, TrainLog* log = nullptr);

// Stage-1 loss on one window starting at `start` with diffusion step `step` and the given noise.
// flip_alpha > 0 perturbs the window's indicator like dataio::perturb_indicator(.., flip_alpha, flip_seed).
motiongen::Stage1Loss window_loss(const motiongen::Stage1Model& model, const PreparedClip& clip,
                                  const morphable::MorphableModel& morph, Index start, int step, const Mat& noise,
                                  const motiongen::Stage1Weights& weights, double flip_alpha = 0.0,
                                  uint64_t flip_seed = 0);

// Renders posed vertex rows (k x 3V tensor) and returns the mean stage-2 loss against `gt`.
renderer::Stage2Loss render_loss(const renderer::Stage2Model& model, const renderer::MeshGaussians& gaussians,
                                 const ag::Tensor& posed_rows, const std::vector<const io::Image*>& gt,
                                 const morphable::CameraPose& camera, const renderer::Stage2Weights& weights);

// Copies every parameter value from `src` into `dst` (same names and shapes).
void copy_parameters(const nn::ParameterSet& src, nn::ParameterSet& dst);

}  // namespace mango::training

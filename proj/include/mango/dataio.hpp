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
#include <map>
#include <string>
#include <vector>

#include "mango/audio.hpp"
#include "mango/core/io.hpp"
#include "mango/morphable.hpp"
#include "mango/motiongen.hpp"

namespace mango::dataio {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;
inline constexpr uint64_t kDeskModelSeed = 7;
inline constexpr Index kSamplesPerFrame = 640;  // 16 kHz / 25 fps

// The mini morphable model shared by the synthetic data and every command.
const morphable::MorphableModel& desk_model();

struct DialogueClip {
  std::string clip_id;
  std::string speaker_id;
  audio::AudioTrack audio_self;
  audio::AudioTrack audio_other;
  audio::IndicatorTrack indicator;
  morphable::MotionSequence motion;  // T x 56
  Vec beta;
  morphable::CameraPose camera;
  std::vector<io::Image> frames;  // empty when absent

  Index frame_count() const { return motion.rows(); }
  bool has_frames() const { return !frames.empty(); }
  // Throws ValidationError when frame counts or audio duration disagree.
  void validate() const;
};

void save_clip(const DialogueClip& clip, const fs::path& dir);
DialogueClip load_clip(const fs::path& dir);

struct DatasetManifest {
  int format = kFormatVersion;
  std::vector<std::string> train, val, test;
  std::map<std::string, std::string> paths;     // clip id -> directory relative to the root
  std::map<std::string, std::string> speakers;  // clip id -> speaker id

  // Splits must be disjoint and test speakers absent from train.
  void validate() const;
  io::Json to_json() const;
  static DatasetManifest from_json(const io::Json& j);
};

void save_manifest(const DatasetManifest& manifest, const fs::path& root);
DatasetManifest load_manifest(const fs::path& root);
std::vector<DialogueClip> load_split(const fs::path& root, const std::string& split);

// ---- synthetic data ----

// Fixed appearance used to render ground-truth frames of synthetic clips.
Mat render_teacher(const morphable::MorphableModel& model, const Mat& posed_vertices,
                   const morphable::CameraPose& camera);

struct SynthOptions {
  bool render_frames = true;
  morphable::Intrinsics intrinsics;
};

DialogueClip synth_clip(uint64_t seed, Index frames, const morphable::MorphableModel& model,
                        const SynthOptions& options = {});
DialogueClip synth_clip(uint64_t seed, Index frames);

struct SynthDatasetOptions {
  int clips = 40;
  double seconds = 10.0;
  int val = 5;
  int test = 5;
  SynthOptions clip;
};
DatasetManifest synth_dataset(const fs::path& root, uint64_t seed, const SynthDatasetOptions& options);

// 2D lip keypoints as an annotator would mark them: posed lip vertices projected to pixels and
// rounded to a quarter pixel. T x 4P, see metrics::lip_curve_annotated.
Mat synth_lip_annotations(const DialogueClip& clip, const morphable::MorphableModel& model);

// ---- indicator robustness ----

Index flip_count(double alpha, Index length);
audio::IndicatorTrack perturb_indicator(const audio::IndicatorTrack& indicator, double alpha, uint64_t seed);
std::vector<double> alpha_grid();

struct EvalOptions {
  std::string encoder_id = "desk";
  motiongen::GenerateOptions generate;
};

// Generates motion for `clip` with the given indicator and returns the zero-head-posed MVE (meters).
double evaluate_mve(const motiongen::Stage1Model& stage1, const DialogueClip& clip,
                    const audio::IndicatorTrack& indicator, const morphable::MorphableModel& model,
                    const EvalOptions& options);

struct SweepPoint {
  double alpha;
  double mve;
};
std::vector<SweepPoint> robustness_sweep(const motiongen::Stage1Model& stage1, const DialogueClip& clip,
                                         const std::vector<double>& alphas, const morphable::MorphableModel& model,
                                         const EvalOptions& options, uint64_t perturb_seed);
void write_sweep(const std::vector<SweepPoint>& points, const fs::path& csv_path, const fs::path& png_path);

}  // namespace mango::dataio

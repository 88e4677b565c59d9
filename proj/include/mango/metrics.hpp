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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mango/core/io.hpp"
#include "mango/morphable.hpp"

namespace mango::metrics {

// Vertex-level view of a mesh used by the mesh metrics. Sequences are flattened T x 3V.
struct MeshTopology {
  Index num_vertices = 0;
  std::vector<int> lip_all;
  std::vector<int> upper_face;
  std::vector<int> lip_upper;
  std::vector<int> lip_lower;
  RowVec neutral;  // 1 x 3V reference for per-vertex displacement

  static MeshTopology from_model(const morphable::MorphableModel& model, const Vec& beta);
};

struct MeshMetrics {
  double lve = 0.0;  // meters
  double mve = 0.0;
  double fdd = 0.0;
  double mod = 0.0;
};

MeshMetrics mesh_metrics_vertices(const Mat& pred, const Mat& gt, const MeshTopology& topology);
MeshMetrics mesh_metrics(const morphable::MotionSequence& pred, const morphable::MotionSequence& gt, const Vec& beta,
                         const morphable::MorphableModel& model);

Vec lip_opening_curve(const Mat& flat_vertices, const MeshTopology& topology);

struct Correlation {
  double value = 0.0;
  bool degenerate = false;
};
Correlation pearson(const Vec& a, const Vec& b);

enum class MtmStrategy { kCrossCorrelationLag };
inline constexpr int kMaxLag = 12;

// Lag tau maximising corr(pred[t], gt[t - tau]) over the overlap; ties go to the smaller |tau|.
int misalignment_lag(const Vec& pred, const Vec& gt, int max_lag = kMaxLag,
                     MtmStrategy strategy = MtmStrategy::kCrossCorrelationLag);

struct SyncMetrics {
  double mtm = 0.0;  // frames
  double slcc = 0.0;
  bool slcc_degenerate = false;
};
SyncMetrics sync_metrics_curves(const Vec& pred_curve, const Vec& gt_curve, const Vec& energy);
SyncMetrics sync_metrics(const morphable::MotionSequence& pred, const morphable::MotionSequence& gt,
                         const Vec& energy, const morphable::MorphableModel& model, const Vec& beta);

struct FrechetResult {
  double value = 0.0;
  bool regularized = false;
};
// Rows are samples. Covariances use the unbiased (N - 1) estimator.
FrechetResult frechet_distance(const Mat& x, const Mat& y);

struct ParamGroup {
  std::string name;
  Index start;
  Index count;
};
std::vector<ParamGroup> param_groups(Index num_expr);

struct DistributionMetrics {
  std::map<std::string, double> fd;   // "FD_exp_S" ...
  std::map<std::string, double> sid;  // "SID_exp" ...
  std::vector<std::string> flags;
};

// Sequences are T_i x D motion; indicators give the state of each frame (1 = speaking).
DistributionMetrics distribution_metrics(const std::vector<Mat>& generated, const std::vector<Mat>& reference,
                                         const std::vector<std::vector<uint8_t>>& indicators, Index num_expr);
// Same, without the two-sequence precondition (single-clip evaluation pools frames).
DistributionMetrics pooled_distribution_metrics(const std::vector<Mat>& generated, const std::vector<Mat>& reference,
                                                const std::vector<std::vector<uint8_t>>& indicators, Index num_expr);
// Mean pairwise L2 across K generations, per frame, averaged over frames.
double sample_diversity(const std::vector<Mat>& generations, Index start, Index count);

struct ImageMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
};
inline constexpr double kPsnrCap = 100.0;
double psnr(const Mat& pred, const Mat& gt);
// Images are (H*W) x C row-major.
double ssim(const Mat& pred, const Mat& gt, int height, int width);
ImageMetrics image_metrics(const std::vector<io::Image>& pred, const std::vector<io::Image>& gt);

enum class LipSource { kAnnotated2D, kProjected3D };
struct LipCurve {
  Vec values;
  std::vector<bool> valid;
};
// Annotated keypoints: T x 4P rows of (upper_x, upper_y, lower_x, lower_y) per pair, NaN when missing.
LipCurve lip_curve_annotated(const Mat& keypoints);
// Posed vertices T x 3V projected through the camera before measuring.
LipCurve lip_curve_projected(const Mat& flat_vertices, const morphable::MorphableModel& model,
                             const morphable::CameraPose& camera);

struct MetricReport {
  std::map<std::string, std::optional<double>> scalars;
  std::map<std::string, Vec> curves;
  std::vector<std::string> flags;

  io::Json to_json() const;
  std::string to_csv() const;
};
std::vector<std::string> report_keys();

struct EvaluationInputs {
  morphable::MotionSequence pred;
  std::vector<Mat> pred_samples;  // optional extra generations for SID
  morphable::MotionSequence gt;
  std::vector<uint8_t> indicator;
  Vec energy;  // per-frame RMS of the agent's audio
  Vec beta;
  std::vector<io::Image> pred_frames;
  std::vector<io::Image> gt_frames;
};
MetricReport evaluate(const EvaluationInputs& inputs, const morphable::MorphableModel& model);

void write_report(const MetricReport& report, const std::filesystem::path& json_path);
void write_curve_csv(const std::filesystem::path& path, const Vec& x, const Vec& y, const std::string& x_name,
                     const std::string& y_name);

struct PlotSeries {
  Vec x;
  Vec y;
  std::array<uint8_t, 3> color{0, 0, 0};
};
void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series, int width = 480,
                     int height = 320);

// Runs `command <frames_dir>` and parses its standard output as JSON.
io::Json run_external_scorer(const std::string& command, const std::filesystem::path& frames_dir);

}  // namespace mango::metrics

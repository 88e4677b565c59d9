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

// Linear morphable face model with jaw and head articulation, plus a
// procedural "mini-face" used in place of licensed head-model assets.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mango/core/tensor.hpp"

namespace mango::morphable {

inline constexpr Index kJawDims = 3;
inline constexpr Index kHeadDims = 3;

/// A motion sequence is a T x (E + 6) matrix: [expression | jaw | head] per row.
using MotionSequence = Mat;

struct MorphableModel {
  Index num_vertices = 0;  // V
  Index num_shape = 0;     // S
  Index num_expr = 0;      // E
  Mat template_vertices;   // V x 3, meters
  Mat shape_basis;         // 3V x S, row (3 * v + axis)
  Mat expr_basis;          // 3V x E
  Vec jaw_weights;         // V, in [0, 1]
  Eigen::Vector3d jaw_pivot = Eigen::Vector3d::Zero();
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> lip_upper;  // paired with lip_lower index by index
  std::vector<int> lip_lower;
  std::vector<int> lip_all;
  std::vector<int> upper_face;
  double slit_gap = 0.0;  // closed-mouth distance between paired lip keypoints

  Index motion_dim() const { return num_expr + kJawDims + kHeadDims; }
  Index jaw_offset() const { return num_expr; }
  Index head_offset() const { return num_expr + kJawDims; }
  // Throws ArgumentError when an invariant is broken.
  void validate() const;
};

struct MotionFrame {
  Vec psi;                                             // E
  Eigen::Vector3d jaw = Eigen::Vector3d::Zero();   // axis-angle, radians
  Eigen::Vector3d head = Eigen::Vector3d::Zero();  // axis-angle, radians

  static MotionFrame zeros(Index num_expr);
  static MotionFrame from_row(const Eigen::Ref<const RowVec>& row, Index num_expr);
  RowVec flatten() const;
};

/// Deterministic procedural head. V must be an icosphere vertex count
/// (12, 42, 162, 642, 2562, ...).
MorphableModel build_mini_model(uint64_t seed, Index num_vertices = 642, Index num_shape = 8,
                                Index num_expr = 50);

Eigen::Vector3d canonicalize_axis_angle(const Eigen::Vector3d& aa);
Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& aa);
// dR/d(aa_k) for k = 0..2.
std::array<Eigen::Matrix3d, 3> rotation_jacobian(const Eigen::Vector3d& aa);

Mat decode(const MorphableModel& model, const Vec& beta, const MotionFrame& frame);
// One flattened (3V) row per frame. When zero_head is set the head rotation
// is ignored and the jaw is kept.
Mat decode_sequence(const MorphableModel& model, const Vec& beta, const MotionSequence& motion, bool zero_head);
Mat decode_zero_pose(const MorphableModel& model, const Vec& beta, const MotionSequence& motion);
// Differentiable decode: motion (T x (E+6)) -> vertices (T x 3V).
ag::Tensor decode_tensor(const MorphableModel& model, const Vec& beta, const ag::Tensor& motion, bool zero_head);

// Mean Euclidean distance over paired upper/lower lip keypoints. `vertices`
// is V x 3 or a single flattened 1 x 3V row.
double lip_opening(const MorphableModel& model, const Mat& vertices);
Vec lip_opening_curve(const MorphableModel& model, const Mat& flat_sequence);

struct Intrinsics {
  double focal = 250.0;  // pixels
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;
};

/// World-to-camera rigid transform with uniform scale (row-major 4x4),
/// OpenCV axes: x right, y down, z forward.
struct CameraPose {
  Eigen::Matrix4d extrinsic = Eigen::Matrix4d::Identity();
  Intrinsics intrinsics;

  double scale() const;
  Eigen::Matrix3d rotation() const;  // scale removed
  // Throws ArgumentError for zero scale, non-orthogonal rotation or focal <= 0.
  void validate() const;
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const;
};

/// Frontal camera at `distance` meters looking at the head along -z.
CameraPose frontal_camera(double distance = 0.5, Intrinsics intrinsics = {});

struct Projection {
  Mat pixels;               // V x 2 (u, v)
  std::vector<bool> valid;  // false when camera-space z <= 0
};
Projection project(const Mat& vertices, const CameraPose& camera);

void save_model(const MorphableModel& model, const std::filesystem::path& dir);
MorphableModel load_model(const std::filesystem::path& dir);

}  // namespace mango::morphable

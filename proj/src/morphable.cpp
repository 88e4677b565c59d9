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

#include "mango/morphable.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "mango/core/errors.hpp"
#include "mango/core/io.hpp"

namespace mango::morphable {
namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using VMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>;
using VMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>;

// Mini-face geometry constants (meters).
constexpr double kMouthY = -0.035;
constexpr double kSlitGap = 0.0005;
constexpr double kOpenUpper = 0.0015;
constexpr double kOpenLower = 0.004;

Matrix3d skew(const Vector3d& v) {
  Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

struct Icosphere {
  std::vector<Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;
};

Icosphere make_icosphere(int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Icosphere s;
  s.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : s.vertices) v.normalize();
  s.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> cache;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      s.vertices.push_back((s.vertices[a] + s.vertices[b]).normalized());
      const int id = static_cast<int>(s.vertices.size()) - 1;
      cache.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(s.faces.size() * 4);
    for (const auto& f : s.faces) {
      const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    s.faces = std::move(next);
  }
  return s;
}

int icosphere_level(Index v) {
  for (int level = 0; level < 8; ++level) {
    const Index count = 10 * (Index{1} << (2 * level)) + 2;
    if (count == v) return level;
    if (count > v) break;
  }
  return -1;
}

double gauss(double d2, double sigma) { return std::exp(-d2 / (2.0 * sigma * sigma)); }

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

void add_random_bumps(Mat& basis, Index col, const Mat& verts, std::mt19937_64& rng, int bumps, double magnitude,
                      double sigma_lo, double sigma_hi) {
  std::uniform_int_distribution<Index> pick(0, verts.rows() - 1);
  std::uniform_real_distribution<double> sig(sigma_lo, sigma_hi);
  std::normal_distribution<double> nd;
  for (int b = 0; b < bumps; ++b) {
    const Vector3d center = verts.row(pick(rng)).transpose();
    const double sigma = sig(rng);
    Vector3d dir(nd(rng), nd(rng), nd(rng));
    dir = dir.normalized() * magnitude;
    for (Index v = 0; v < verts.rows(); ++v) {
      const double g = gauss((verts.row(v).transpose() - center).squaredNorm(), sigma);
      for (int a = 0; a < 3; ++a) basis(3 * v + a, col) += g * dir(a);
    }
  }
}

void check_dims(const MorphableModel& model, const Vec& beta, Index motion_cols) {
  if (beta.size() != model.num_shape) {
    throw ArgumentError("shape parameter length " + std::to_string(beta.size()) + " != " +
                        std::to_string(model.num_shape));
  }
  if (motion_cols != model.motion_dim()) {
    throw ArgumentError("motion width " + std::to_string(motion_cols) + " != " +
                        std::to_string(model.motion_dim()));
  }
}

// Applies jaw then head rotation in place to rows of a V x 3 map.
void articulate(const MorphableModel& model, const Matrix3d& rj, const Matrix3d& rh, bool apply_head, VMapMut pts) {
  const Vector3d c = model.jaw_pivot;
  for (Index v = 0; v < model.num_vertices; ++v) {
    const double w = model.jaw_weights(v);
    Vector3d p = pts.row(v).transpose();
    if (w > 0.0) p = (1.0 - w) * p + w * (rj * (p - c) + c);
    if (apply_head) p = rh * p;
    pts.row(v) = p.transpose();
  }
}

}  // namespace

void MorphableModel::validate() const {
  const Index v = num_vertices;
  MANGO_CHECK_ARG(v >= 12 && num_shape >= 1 && num_expr >= 1, "morphable model dimensions out of range");
  MANGO_CHECK_ARG(template_vertices.rows() == v && template_vertices.cols() == 3, "template must be V x 3");
  MANGO_CHECK_ARG(shape_basis.rows() == 3 * v && shape_basis.cols() == num_shape, "shape basis must be 3V x S");
  MANGO_CHECK_ARG(expr_basis.rows() == 3 * v && expr_basis.cols() == num_expr, "expression basis must be 3V x E");
  MANGO_CHECK_ARG(jaw_weights.size() == v, "jaw weights must have V entries");
  MANGO_CHECK_ARG(template_vertices.allFinite() && shape_basis.allFinite() && expr_basis.allFinite(),
                  "model arrays must be finite");
  MANGO_CHECK_ARG((jaw_weights.array() >= 0.0).all() && (jaw_weights.array() <= 1.0).all(),
                  "jaw weights must lie in [0, 1]");
  MANGO_CHECK_ARG(lip_upper.size() == lip_lower.size() && !lip_upper.empty(),
                  "lip keypoint lists must be non-empty and paired");
  auto in_range = [v](const std::vector<int>& ids) {
    return std::all_of(ids.begin(), ids.end(), [v](int i) { return i >= 0 && i < v; });
  };
  MANGO_CHECK_ARG(in_range(lip_upper) && in_range(lip_lower) && in_range(lip_all) && in_range(upper_face),
                  "index list entry out of range");
  for (const auto& t : triangles) {
    for (int i : t) MANGO_CHECK_ARG(i >= 0 && i < v, "triangle references an invalid vertex");
  }
}

MotionFrame MotionFrame::zeros(Index num_expr) {
  MotionFrame f;
  f.psi = Vec::Zero(num_expr);
  return f;
}

MotionFrame MotionFrame::from_row(const Eigen::Ref<const RowVec>& row, Index num_expr) {
  MANGO_CHECK_ARG(row.size() == num_expr + 6, "motion row has the wrong width");
  MotionFrame f;
  f.psi = row.head(num_expr).transpose();
  f.jaw = row.segment<3>(num_expr).transpose();
  f.head = row.segment<3>(num_expr + 3).transpose();
  return f;
}

RowVec MotionFrame::flatten() const {
  RowVec r(psi.size() + 6);
  r.head(psi.size()) = psi.transpose();
  r.segment<3>(psi.size()) = jaw.transpose();
  r.segment<3>(psi.size() + 3) = head.transpose();
  return r;
}

MorphableModel build_mini_model(uint64_t seed, Index num_vertices, Index num_shape, Index num_expr) {
  if (num_vertices < 12 || num_shape < 1 || num_expr < 1) {
    throw ArgumentError("build_mini_model: need V >= 12, S >= 1, E >= 1");
  }
  const int level = icosphere_level(num_vertices);
  if (level < 0) {
    throw ArgumentError("build_mini_model: V=" + std::to_string(num_vertices) +
                        " is not an icosphere vertex count (10 * 4^k + 2)");
  }
  std::mt19937_64 rng(seed);
  Icosphere sphere = make_icosphere(level);
  MorphableModel m;
  m.num_vertices = num_vertices;
  m.num_shape = num_shape;
  m.num_expr = num_expr;
  m.triangles = sphere.faces;
  m.slit_gap = kSlitGap;

  Mat& tv = m.template_vertices;
  tv.resize(num_vertices, 3);
  for (Index v = 0; v < num_vertices; ++v) {
    const Vector3d& u = sphere.vertices[static_cast<size_t>(v)];
    Vector3d p(0.075 * u.x(), 0.1 * u.y(), 0.085 * u.z());
    if (p.z() > 0.0) p.z() += 0.012 * gauss(p.x() * p.x() + 0.5 * (p.y() - 0.005) * (p.y() - 0.005), 0.012);
    tv.row(v) = p.transpose();
  }
  const double front_z = 0.085 * std::sqrt(std::max(0.0, 1.0 - (kMouthY / 0.1) * (kMouthY / 0.1)));
  const Vector3d mouth(0.0, kMouthY, front_z);

  // Lip keypoints: the 2n front vertices nearest the mouth centre, paired by x
  // and snapped onto a closed slit.
  const size_t pairs = num_vertices >= 642 ? 8 : static_cast<size_t>(std::max<Index>(1, num_vertices / 80));
  std::vector<int> front;
  for (Index v = 0; v < num_vertices; ++v)
    if (tv(v, 2) > 0.0) front.push_back(static_cast<int>(v));
  std::sort(front.begin(), front.end(), [&](int a, int b) {
    return (tv.row(a).transpose() - mouth).squaredNorm() < (tv.row(b).transpose() - mouth).squaredNorm();
  });
  std::vector<int> lips(front.begin(), front.begin() + static_cast<long>(std::min(front.size(), 2 * pairs)));
  std::sort(lips.begin(), lips.end(), [&](int a, int b) { return tv(a, 0) < tv(b, 0) || (tv(a, 0) == tv(b, 0) && a < b); });
  for (size_t i = 0; i + 1 < lips.size(); i += 2) {
    int up = lips[i], lo = lips[i + 1];
    if (tv(up, 1) < tv(lo, 1)) std::swap(up, lo);
    const double x = 0.5 * (tv(up, 0) + tv(lo, 0));
    const double z = 0.5 * (tv(up, 2) + tv(lo, 2));
    tv.row(up) << x, kMouthY + 0.5 * kSlitGap, z;
    tv.row(lo) << x, kMouthY - 0.5 * kSlitGap, z;
    m.lip_upper.push_back(up);
    m.lip_lower.push_back(lo);
  }

  for (Index v = 0; v < num_vertices; ++v) {
    const Vector3d p = tv.row(v).transpose();
    const bool is_lip = std::find(lips.begin(), lips.end(), static_cast<int>(v)) != lips.end();
    if (p.z() > 0.0 && (is_lip || (p - mouth).norm() < 0.025)) m.lip_all.push_back(static_cast<int>(v));
    if (p.z() > 0.0 && p.y() > 0.01) m.upper_face.push_back(static_cast<int>(v));
  }

  m.jaw_pivot = Vector3d(0.0, kMouthY + 0.005, -0.03);
  m.jaw_weights = Vec::Zero(num_vertices);
  for (Index v = 0; v < num_vertices; ++v) {
    if (tv(v, 1) < kMouthY) m.jaw_weights(v) = smoothstep(-0.02, 0.03, tv(v, 2));
  }

  m.expr_basis = Mat::Zero(3 * num_vertices, num_expr);
  for (Index v = 0; v < num_vertices; ++v) {
    const Vector3d p = tv.row(v).transpose();
    if (p.z() <= 0.0) continue;
    const double g = gauss((p - mouth).squaredNorm(), 0.015);
    // Column 0 opens the slit: lower lip down, upper lip up.
    m.expr_basis(3 * v + 1, 0) = p.y() < kMouthY ? -kOpenLower * g : kOpenUpper * g;
    if (num_expr > 1) {
      // Column 1 pulls the mouth corners up and out; it depends on x only
      // near the slit so paired lip keypoints move together.
      const double corner = gauss((std::abs(p.x()) - 0.02) * (std::abs(p.x()) - 0.02), 0.01) *
                            gauss((p.y() - kMouthY) * (p.y() - kMouthY), 0.02);
      m.expr_basis(3 * v + 0, 1) = (p.x() >= 0 ? 1.0 : -1.0) * 0.002 * corner;
      m.expr_basis(3 * v + 1, 1) = 0.003 * corner;
    }
  }
  for (Index e = 2; e < num_expr; ++e) add_random_bumps(m.expr_basis, e, tv, rng, 2, 0.002, 0.015, 0.03);
  m.shape_basis = Mat::Zero(3 * num_vertices, num_shape);
  for (Index s = 0; s < num_shape; ++s) add_random_bumps(m.shape_basis, s, tv, rng, 3, 0.004, 0.03, 0.05);

  io::round_to_f32(m.template_vertices);
  io::round_to_f32(m.shape_basis);
  io::round_to_f32(m.expr_basis);
  Mat jw = m.jaw_weights.transpose();
  io::round_to_f32(jw);
  m.jaw_weights = jw.transpose();
  for (int a = 0; a < 3; ++a) m.jaw_pivot(a) = static_cast<float>(m.jaw_pivot(a));
  m.slit_gap = static_cast<float>(m.slit_gap);
  m.validate();
  return m;
}

Vector3d canonicalize_axis_angle(const Vector3d& aa) {
  const double angle = aa.norm();
  if (angle <= M_PI || angle == 0.0) return aa;
  double wrapped = std::fmod(angle, 2.0 * M_PI);
  if (wrapped > M_PI) wrapped -= 2.0 * M_PI;
  return aa / angle * wrapped;
}

Matrix3d rotation_matrix(const Vector3d& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) return Matrix3d::Identity() + skew(aa);
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

std::array<Matrix3d, 3> rotation_jacobian(const Vector3d& aa) {
  std::array<Matrix3d, 3> d;
  const double n2 = aa.squaredNorm();
  if (n2 < 1e-20) {
    for (int k = 0; k < 3; ++k) d[k] = skew(Vector3d::Unit(k));
    return d;
  }
  const Matrix3d r = rotation_matrix(aa);
  const Matrix3d i_minus_r = Matrix3d::Identity() - r;
  for (int k = 0; k < 3; ++k) {
    const Vector3d ek = Vector3d::Unit(k);
    d[k] = (aa(k) * skew(aa) + skew(aa.cross(i_minus_r * ek))) * r / n2;
  }
  return d;
}

Mat decode(const MorphableModel& model, const Vec& beta, const MotionFrame& frame) {
  MANGO_CHECK_ARG(frame.psi.size() == model.num_expr, "expression length does not match the model");
  Mat motion = frame.flatten();
  Mat flat = decode_sequence(model, beta, motion, false);
  return Eigen::Map<const Mat>(flat.data(), model.num_vertices, 3);
}

Mat decode_sequence(const MorphableModel& model, const Vec& beta, const MotionSequence& motion, bool zero_head) {
  check_dims(model, beta, motion.cols());
  const Index v3 = 3 * model.num_vertices;
  RowVec base = Eigen::Map<const RowVec>(model.template_vertices.data(), v3) +
                (model.shape_basis * beta).transpose();
  Mat out = motion.leftCols(model.num_expr) * model.expr_basis.transpose();
  out.rowwise() += base;
  for (Index t = 0; t < motion.rows(); ++t) {
    const Vector3d jaw = motion.row(t).segment<3>(model.jaw_offset()).transpose();
    const Vector3d head = motion.row(t).segment<3>(model.head_offset()).transpose();
    articulate(model, rotation_matrix(jaw), rotation_matrix(head), !zero_head,
               VMapMut(out.row(t).data(), model.num_vertices, 3));
  }
  return out;
}

Mat decode_zero_pose(const MorphableModel& model, const Vec& beta, const MotionSequence& motion) {
  return decode_sequence(model, beta, motion, true);
}

ag::Tensor decode_tensor(const MorphableModel& model, const Vec& beta, const ag::Tensor& motion, bool zero_head) {
  check_dims(model, beta, motion.cols());
  Mat value = decode_sequence(model, beta, motion.value(), zero_head);
  if (!motion.requires_grad() || !ag::grad_enabled()) return ag::Tensor(std::move(value), false);
  const MorphableModel* mp = &model;
  ag::NodePtr mn = motion.node();
  const Index v3 = 3 * model.num_vertices;
  RowVec base = Eigen::Map<const RowVec>(model.template_vertices.data(), v3) +
                (model.shape_basis * beta).transpose();
  return ag::make_op(std::move(value), {motion}, [mp, mn, base, zero_head](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    const MorphableModel& m = *mp;
    const Index nv = m.num_vertices;
    const Mat& motion_v = mn->value;
    Mat pre = motion_v.leftCols(m.num_expr) * m.expr_basis.transpose();
    pre.rowwise() += base;
    Mat gp_all(motion_v.rows(), 3 * nv);
    for (Index t = 0; t < motion_v.rows(); ++t) {
      const Vector3d jaw = motion_v.row(t).segment<3>(m.jaw_offset()).transpose();
      const Vector3d head = motion_v.row(t).segment<3>(m.head_offset()).transpose();
      const Matrix3d rj = rotation_matrix(jaw);
      const Matrix3d rh = rotation_matrix(head);
      VMap p(pre.row(t).data(), nv, 3);
      VMap gv(g.row(t).data(), nv, 3);
      Matrix3d d_rh = Matrix3d::Zero(), d_rj = Matrix3d::Zero();
      VMapMut gp(gp_all.row(t).data(), nv, 3);
      for (Index v = 0; v < nv; ++v) {
        const double w = m.jaw_weights(v);
        const Vector3d pv = p.row(v).transpose();
        const Vector3d rel = pv - m.jaw_pivot;
        Vector3d q = pv;
        if (w > 0.0) q = (1.0 - w) * pv + w * (rj * rel + m.jaw_pivot);
        Vector3d gq = gv.row(v).transpose();
        if (!zero_head) {
          d_rh += gq * q.transpose();
          gq = rh.transpose() * gq;
        }
        Vector3d gpv = gq;
        if (w > 0.0) {
          d_rj += w * gq * rel.transpose();
          gpv = (1.0 - w) * gq + w * rj.transpose() * gq;
        }
        gp.row(v) = gpv.transpose();
      }
      const auto jj = rotation_jacobian(jaw);
      for (int k = 0; k < 3; ++k) (*gi[0])(t, m.jaw_offset() + k) += d_rj.cwiseProduct(jj[k]).sum();
      if (!zero_head) {
        const auto jh = rotation_jacobian(head);
        for (int k = 0; k < 3; ++k) (*gi[0])(t, m.head_offset() + k) += d_rh.cwiseProduct(jh[k]).sum();
      }
    }
    gi[0]->leftCols(m.num_expr).noalias() += gp_all * m.expr_basis;
  });
}

double lip_opening(const MorphableModel& model, const Mat& vertices) {
  const bool flat = vertices.rows() == 1 && vertices.cols() == 3 * model.num_vertices;
  MANGO_CHECK_ARG(flat || (vertices.rows() == model.num_vertices && vertices.cols() == 3),
                  "lip_opening: vertices do not match the model");
  VMap pts(vertices.data(), model.num_vertices, 3);
  double total = 0.0;
  for (size_t i = 0; i < model.lip_upper.size(); ++i) {
    total += (pts.row(model.lip_upper[i]) - pts.row(model.lip_lower[i])).norm();
  }
  return total / static_cast<double>(model.lip_upper.size());
}

Vec lip_opening_curve(const MorphableModel& model, const Mat& flat_sequence) {
  Vec curve(flat_sequence.rows());
  for (Index t = 0; t < flat_sequence.rows(); ++t) curve(t) = lip_opening(model, flat_sequence.row(t));
  return curve;
}

double CameraPose::scale() const {
  const double det = extrinsic.topLeftCorner<3, 3>().determinant();
  return det > 0 ? std::cbrt(det) : 0.0;
}

Matrix3d CameraPose::rotation() const {
  const double s = scale();
  return s > 0 ? Matrix3d(extrinsic.topLeftCorner<3, 3>() / s) : Matrix3d::Zero();
}

void CameraPose::validate() const {
  const double s = scale();
  if (!(s > 1e-12)) throw ArgumentError("camera extrinsic has zero or negative scale");
  const Matrix3d r = rotation();
  if (!(r.transpose() * r).isApprox(Matrix3d::Identity(), 1e-6)) {
    throw ArgumentError("camera rotation block is not orthogonal");
  }
  if (!(intrinsics.focal > 0.0)) throw ArgumentError("camera focal length must be positive");
}

Vector3d CameraPose::to_camera(const Vector3d& world) const {
  return extrinsic.topLeftCorner<3, 3>() * world + extrinsic.topRightCorner<3, 1>();
}

CameraPose frontal_camera(double distance, Intrinsics intrinsics) {
  CameraPose cam;
  cam.extrinsic = Eigen::Matrix4d::Identity();
  cam.extrinsic(1, 1) = -1.0;
  cam.extrinsic(2, 2) = -1.0;
  cam.extrinsic(2, 3) = distance;
  cam.intrinsics = intrinsics;
  return cam;
}

Projection project(const Mat& vertices, const CameraPose& camera) {
  camera.validate();
  MANGO_CHECK_ARG(vertices.cols() == 3, "project: vertices must be N x 3");
  Projection p;
  p.pixels = Mat::Zero(vertices.rows(), 2);
  p.valid.assign(static_cast<size_t>(vertices.rows()), false);
  const auto& in = camera.intrinsics;
  for (Index i = 0; i < vertices.rows(); ++i) {
    const Vector3d c = camera.to_camera(vertices.row(i).transpose());
    if (c.z() <= 0.0) continue;
    p.pixels(i, 0) = in.focal * c.x() / c.z() + in.cx;
    p.pixels(i, 1) = in.focal * c.y() / c.z() + in.cy;
    p.valid[static_cast<size_t>(i)] = true;
  }
  return p;
}

void save_model(const MorphableModel& model, const std::filesystem::path& dir) {
  model.validate();
  std::filesystem::create_directories(dir);
  io::Json j;
  j["format"] = 1;
  j["num_vertices"] = model.num_vertices;
  j["num_shape"] = model.num_shape;
  j["num_expr"] = model.num_expr;
  j["slit_gap"] = static_cast<float>(model.slit_gap);
  j["jaw_pivot"] = {static_cast<float>(model.jaw_pivot.x()), static_cast<float>(model.jaw_pivot.y()),
                    static_cast<float>(model.jaw_pivot.z())};
  j["triangles"] = model.triangles;
  j["lip_upper"] = model.lip_upper;
  j["lip_lower"] = model.lip_lower;
  j["lip_all"] = model.lip_all;
  j["upper_face"] = model.upper_face;
  j["files"] = {{"template", "template.f32"},
                {"shape_basis", "shape_basis.f32"},
                {"expr_basis", "expr_basis.f32"},
                {"jaw_weights", "jaw_weights.f32"}};
  io::write_json(dir / "manifest.json", j);
  io::write_f32_matrix(dir / "template.f32", model.template_vertices);
  io::write_f32_matrix(dir / "shape_basis.f32", model.shape_basis);
  io::write_f32_matrix(dir / "expr_basis.f32", model.expr_basis);
  io::write_f32_matrix(dir / "jaw_weights.f32", model.jaw_weights.transpose());
}

MorphableModel load_model(const std::filesystem::path& dir) {
  const io::Json j = io::read_json(dir / "manifest.json");
  MorphableModel m;
  try {
    m.num_vertices = j.at("num_vertices").get<Index>();
    m.num_shape = j.at("num_shape").get<Index>();
    m.num_expr = j.at("num_expr").get<Index>();
    m.slit_gap = j.at("slit_gap").get<float>();
    const auto pivot = j.at("jaw_pivot").get<std::vector<float>>();
    if (pivot.size() != 3) throw FormatError((dir / "manifest.json").string() + ": jaw_pivot needs 3 entries");
    m.jaw_pivot = Vector3d(pivot[0], pivot[1], pivot[2]);
    m.triangles = j.at("triangles").get<std::vector<std::array<int, 3>>>();
    m.lip_upper = j.at("lip_upper").get<std::vector<int>>();
    m.lip_lower = j.at("lip_lower").get<std::vector<int>>();
    m.lip_all = j.at("lip_all").get<std::vector<int>>();
    m.upper_face = j.at("upper_face").get<std::vector<int>>();
    const auto& files = j.at("files");
    const Index v = m.num_vertices;
    m.template_vertices = io::read_f32_matrix(dir / files.at("template").get<std::string>(), v, 3);
    m.shape_basis = io::read_f32_matrix(dir / files.at("shape_basis").get<std::string>(), 3 * v, m.num_shape);
    m.expr_basis = io::read_f32_matrix(dir / files.at("expr_basis").get<std::string>(), 3 * v, m.num_expr);
    m.jaw_weights = io::read_f32_matrix(dir / files.at("jaw_weights").get<std::string>(), 1, v).transpose();
  } catch (const io::Json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  m.validate();
  return m;
}

}  // namespace mango::morphable

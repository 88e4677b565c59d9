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

#include <ceres/jet.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mango/core/errors.hpp"
#include "mango/renderer.hpp"

namespace mango::renderer {

namespace {

using std::exp;
using std::sqrt;

// Kernel value at the cutoff; alpha is shifted by it so the footprint edge is continuous.
const double kEdge = std::exp(-0.5 * kCutoffSigma * kCutoffSigma);

struct CameraParams {
  Eigen::Matrix3d w;  // rotation times scale
  Eigen::Vector3d t;
  double f, cx, cy;
};

CameraParams camera_params(const CameraPose& camera) {
  camera.validate();
  CameraParams p;
  p.w = camera.extrinsic.topLeftCorner<3, 3>();
  p.t = camera.extrinsic.topRightCorner<3, 1>();
  p.f = camera.intrinsics.focal;
  p.cx = camera.intrinsics.cx;
  p.cy = camera.intrinsics.cy;
  return p;
}

// out = (u, v, conic_a, conic_b, conic_c); returns false when behind the near plane.
template <typename T>
bool project_gaussian(const T* mu, const T* q, const T* s, const CameraParams& cam, T* out, double* depth,
                      double* radius) {
  const T qn = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  const T w = q[0] / qn, x = q[1] / qn, y = q[2] / qn, z = q[3] / qn;
  T r[3][3] = {{T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y)},
               {T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x)},
               {T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y)}};
  const T sc[3] = {exp(s[0]), exp(s[1]), exp(s[2])};
  // m = W R S, so the camera-space covariance is m m^T.
  T m[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T acc = T(0);
      for (int k = 0; k < 3; ++k) acc += cam.w(i, k) * r[k][j];
      m[i][j] = acc * sc[j];
    }
  T pc[3];
  for (int i = 0; i < 3; ++i) pc[i] = cam.w(i, 0) * mu[0] + cam.w(i, 1) * mu[1] + cam.w(i, 2) * mu[2] + cam.t(i);
  double zv;
  if constexpr (std::is_same_v<T, double>) {
    zv = pc[2];
  } else {
    zv = pc[2].a;
  }
  if (!(zv > kNearPlane)) return false;
  const T iz = T(1) / pc[2];
  const T j00 = cam.f * iz, j02 = -cam.f * pc[0] * iz * iz;
  const T j11 = cam.f * iz, j12 = -cam.f * pc[1] * iz * iz;
  T a0[3], a1[3];
  for (int j = 0; j < 3; ++j) {
    a0[j] = j00 * m[0][j] + j02 * m[2][j];
    a1[j] = j11 * m[1][j] + j12 * m[2][j];
  }
  const T c00 = a0[0] * a0[0] + a0[1] * a0[1] + a0[2] * a0[2] + T(kDilation);
  const T c01 = a0[0] * a1[0] + a0[1] * a1[1] + a0[2] * a1[2];
  const T c11 = a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2] + T(kDilation);
  const T det = c00 * c11 - c01 * c01;
  out[0] = cam.f * pc[0] * iz + cam.cx;
  out[1] = cam.f * pc[1] * iz + cam.cy;
  out[2] = c11 / det;
  out[3] = -c01 / det;
  out[4] = c00 / det;
  *depth = zv;
  if constexpr (std::is_same_v<T, double>) {
    const double mid = 0.5 * (c00 + c11);
    const double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
    *radius = kCutoffSigma * std::sqrt(lmax);
  }
  return true;
}

struct Contribution {
  int id;
  double alpha;
  double g;
  double t;  // transmittance before this Gaussian
};

// Per-pixel contribution lists stored back to back: pixel p owns
// entries[start[p] .. start[p] + used[p]).
struct SplatCache {
  int height = 0, width = 0;
  std::vector<std::array<double, 5>> proj;
  std::vector<int> start;
  std::vector<int> used;
  std::vector<Contribution> entries;
};

}  // namespace

void GaussianSet::validate() const {
  const Index g = size();
  if (g == 0) return;
  if (mu.cols() != 3 || rot.rows() != g || rot.cols() != 4 || scale.rows() != g || scale.cols() != 3 ||
      opacity.rows() != g || opacity.cols() != 1 || appearance.rows() != g) {
    throw ArgumentError("GaussianSet: inconsistent attribute shapes");
  }
  auto finite = [](const Mat& m) { return m.allFinite(); };
  if (!finite(mu.value()) || !finite(rot.value()) || !finite(scale.value()) || !finite(opacity.value()) ||
      !finite(appearance.value())) {
    throw ArgumentError("GaussianSet: non-finite attribute");
  }
  for (Index i = 0; i < g; ++i) {
    if (std::abs(rot.value().row(i).norm() - 1.0) > 1e-6) throw ArgumentError("GaussianSet: quaternion not unit");
    const double o = opacity.value()(i, 0);
    if (o < 0.0 || o > 1.0) throw ArgumentError("GaussianSet: opacity outside [0, 1]");
  }
}

GaussianSet GaussianSet::empty(Index channels) {
  return from_values(Mat(0, 3), Mat(0, 4), Mat(0, 3), Mat(0, 1), Mat(0, channels));
}

GaussianSet GaussianSet::from_values(const Mat& mu, const Mat& rot, const Mat& log_scale, const Mat& opacity,
                                     const Mat& appearance) {
  GaussianSet s;
  s.mu = ag::Tensor::constant(mu);
  s.rot = ag::Tensor::constant(rot);
  s.scale = ag::Tensor::constant(log_scale);
  s.opacity = ag::Tensor::constant(opacity);
  s.appearance = ag::Tensor::constant(appearance);
  return s;
}

GaussianSet concat(const GaussianSet& a, const GaussianSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.channels() != b.channels()) throw ArgumentError("concat: appearance width mismatch");
  GaussianSet s;
  s.mu = ag::concat_rows({a.mu, b.mu});
  s.rot = ag::concat_rows({a.rot, b.rot});
  s.scale = ag::concat_rows({a.scale, b.scale});
  s.opacity = ag::concat_rows({a.opacity, b.opacity});
  s.appearance = ag::concat_rows({a.appearance, b.appearance});
  return s;
}

SplatResult splat(const GaussianSet& gs, const CameraPose& camera) {
  const CameraParams cam = camera_params(camera);
  const int height = camera.intrinsics.height, width = camera.intrinsics.width;
  if (height <= 0 || width <= 0) throw ArgumentError("splat: image size must be positive");
  const Index n = gs.size();
  const Index c = gs.channels();
  const Index hw = static_cast<Index>(height) * width;
  if (n == 0) {
    return {ag::Tensor::constant(Mat::Zero(hw, c)), ag::Tensor::constant(Mat::Zero(hw, 1))};
  }
  gs.validate();
  const Mat& mu = gs.mu.value();
  const Mat& rot = gs.rot.value();
  const Mat& sc = gs.scale.value();
  const Mat& op = gs.opacity.value();
  const Mat& app = gs.appearance.value();

  auto cache = std::make_shared<SplatCache>();
  cache->height = height;
  cache->width = width;
  cache->proj.resize(static_cast<size_t>(n));
  std::vector<double> depth(static_cast<size_t>(n)), radius(static_cast<size_t>(n));
  std::vector<int> order;
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<size_t>(i);
    if (project_gaussian(mu.row(i).data(), rot.row(i).data(), sc.row(i).data(), cam, cache->proj[k].data(),
                         &depth[k], &radius[k])) {
      order.push_back(static_cast<int>(i));
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return depth[a] < depth[b]; });

  // Bin footprints front to back.
  std::vector<int> raw_pixel;
  std::vector<Contribution> raw;
  for (int id : order) {
    const auto& p = cache->proj[static_cast<size_t>(id)];
    const double r = radius[static_cast<size_t>(id)];
    const int x0 = std::max(0, static_cast<int>(std::ceil(p[0] - r)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(p[0] + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(p[1] - r)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(p[1] + r)));
    const double o = op(id, 0);
    if (o <= 0.0) continue;
    for (int y = y0; y <= y1; ++y) {
      const double dy = y - p[1];
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - p[0];
        const double m = p[2] * dx * dx + 2.0 * p[3] * dx * dy + p[4] * dy * dy;
        if (m >= kCutoffSigma * kCutoffSigma) continue;
        const double g = std::exp(-0.5 * m);
        const double alpha = o * (g - kEdge) / (1.0 - kEdge);
        if (alpha <= 0.0) continue;
        raw_pixel.push_back(y * width + x);
        raw.push_back({id, alpha, g, 0.0});
      }
    }
  }
  // Stable counting sort by pixel keeps each list depth ordered.
  cache->start.assign(static_cast<size_t>(hw) + 1, 0);
  for (int p : raw_pixel) ++cache->start[static_cast<size_t>(p) + 1];
  for (size_t p = 0; p < static_cast<size_t>(hw); ++p) cache->start[p + 1] += cache->start[p];
  cache->entries.resize(raw.size());
  {
    std::vector<int> fill(cache->start.begin(), cache->start.end() - 1);
    for (size_t k = 0; k < raw.size(); ++k) {
      const auto slot = static_cast<size_t>(fill[static_cast<size_t>(raw_pixel[k])]++);
      cache->entries[slot] = raw[k];
    }
  }
  cache->used.assign(static_cast<size_t>(hw), 0);

  Mat feat = Mat::Zero(hw, c);
  Mat alpha_map = Mat::Zero(hw, 1);
  for (Index px = 0; px < hw; ++px) {
    const auto p = static_cast<size_t>(px);
    double t = 1.0;
    int used = 0;
    for (int k = cache->start[p]; k < cache->start[p + 1]; ++k) {
      if (t < 1e-6) break;
      auto& e = cache->entries[static_cast<size_t>(k)];
      e.t = t;
      feat.row(px) += (e.alpha * t) * app.row(e.id);
      t *= 1.0 - e.alpha;
      ++used;
    }
    cache->used[p] = used;
    alpha_map(px, 0) = 1.0 - t;
  }

  Mat packed(hw, c + 1);
  packed << feat, alpha_map;
  ag::NodePtr mun = gs.mu.node(), rn = gs.rot.node(), sn = gs.scale.node(), on = gs.opacity.node(),
              an = gs.appearance.node();
  ag::Tensor out = ag::make_op(
      std::move(packed), {gs.mu, gs.rot, gs.scale, gs.opacity, gs.appearance},
      [cache, cam, mun, rn, sn, on, an, c](const Mat& grad, const std::vector<Mat*>& gi) {
        const Index count = mun->value.rows();
        const int width = cache->width;
        Mat g_proj = Mat::Zero(count, 5);
        Mat g_op = Mat::Zero(count, 1);
        Mat g_app = Mat::Zero(count, c);
        const Mat& app = an->value;
        const Mat& op = on->value;
        RowVec rest(c);
        for (size_t px = 0; px < cache->used.size(); ++px) {
          const int used = cache->used[px];
          if (used == 0) continue;
          const Contribution* list = cache->entries.data() + cache->start[px];
          const auto row = static_cast<Index>(px);
          const RowVec g_f = grad.row(row).head(c);
          const double g_a = grad(row, c);
          if (g_f.isZero(0.0) && g_a == 0.0) continue;
          const double py = static_cast<double>(px / static_cast<size_t>(width));
          const double pxx = static_cast<double>(px % static_cast<size_t>(width));
          rest.setZero();
          double rest_a = 0.0;
          for (int k = used; k-- > 0;) {
            const auto& e = list[k];
            const auto ci = app.row(e.id);
            const double d_alpha = e.t * (ci.dot(g_f) - rest.dot(g_f)) + g_a * e.t * (1.0 - rest_a);
            g_app.row(e.id) += (e.alpha * e.t) * g_f;
            rest = e.alpha * ci + (1.0 - e.alpha) * rest;
            rest_a = e.alpha + (1.0 - e.alpha) * rest_a;
            const double o = op(e.id, 0);
            g_op(e.id, 0) += d_alpha * (e.g - kEdge) / (1.0 - kEdge);
            const double d_m = d_alpha * o / (1.0 - kEdge) * (-0.5 * e.g);
            const auto& p = cache->proj[static_cast<size_t>(e.id)];
            const double dx = pxx - p[0], dy = py - p[1];
            g_proj(e.id, 0) += d_m * -(2.0 * p[2] * dx + 2.0 * p[3] * dy);
            g_proj(e.id, 1) += d_m * -(2.0 * p[3] * dx + 2.0 * p[4] * dy);
            g_proj(e.id, 2) += d_m * dx * dx;
            g_proj(e.id, 3) += d_m * 2.0 * dx * dy;
            g_proj(e.id, 4) += d_m * dy * dy;
          }
        }
        if (gi[3]) *gi[3] += g_op;
        if (gi[4]) *gi[4] += g_app;
        if (!gi[0] && !gi[1] && !gi[2]) return;
        using J = ceres::Jet<double, 10>;
        for (Index i = 0; i < count; ++i) {
          if (g_proj.row(i).isZero(0.0)) continue;
          J mu[3], q[4], s[3], out[5];
          for (int k = 0; k < 3; ++k) mu[k] = J(mun->value(i, k), k);
          for (int k = 0; k < 4; ++k) q[k] = J(rn->value(i, k), 3 + k);
          for (int k = 0; k < 3; ++k) s[k] = J(sn->value(i, k), 7 + k);
          double depth, radius;
          if (!project_gaussian(mu, q, s, cam, out, &depth, &radius)) continue;
          Eigen::Matrix<double, 10, 1> d = Eigen::Matrix<double, 10, 1>::Zero();
          for (int k = 0; k < 5; ++k) d += g_proj(i, k) * out[k].v;
          if (gi[0]) gi[0]->row(i) += d.segment<3>(0).transpose();
          if (gi[1]) gi[1]->row(i) += d.segment<4>(3).transpose();
          if (gi[2]) gi[2]->row(i) += d.segment<3>(7).transpose();
        }
      });
  return {ag::slice_cols(out, 0, c), ag::slice_cols(out, c, 1)};
}

namespace {

template <typename T>
void frame_from_triangle(const T* v0, const T* v1, const T* v2, T r[3][3]) {
  T e[3], f[3];
  for (int k = 0; k < 3; ++k) {
    e[k] = v1[k] - v0[k];
    f[k] = v2[k] - v0[k];
  }
  T nrm[3] = {e[1] * f[2] - e[2] * f[1], e[2] * f[0] - e[0] * f[2], e[0] * f[1] - e[1] * f[0]};
  const T le = sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
  const T ln = sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
  for (int k = 0; k < 3; ++k) {
    e[k] = e[k] / le;
    nrm[k] = nrm[k] / ln;
  }
  const T b[3] = {nrm[1] * e[2] - nrm[2] * e[1], nrm[2] * e[0] - nrm[0] * e[2], nrm[0] * e[1] - nrm[1] * e[0]};
  for (int k = 0; k < 3; ++k) {
    r[k][0] = e[k];
    r[k][1] = b[k];
    r[k][2] = nrm[k];
  }
}

}  // namespace

TriangleFrames triangle_frames(const morphable::MorphableModel& model, const Mat& vertices) {
  if (vertices.rows() != model.num_vertices || vertices.cols() != 3) {
    throw ArgumentError("triangle_frames: vertex count mismatch");
  }
  TriangleFrames out;
  const auto f = static_cast<Index>(model.triangles.size());
  out.barycenters.resize(f, 3);
  out.rotations.resize(model.triangles.size());
  for (Index i = 0; i < f; ++i) {
    const auto& tri = model.triangles[static_cast<size_t>(i)];
    Eigen::Vector3d v[3];
    for (int k = 0; k < 3; ++k) v[k] = vertices.row(tri[static_cast<size_t>(k)]).transpose();
    out.barycenters.row(i) = ((v[0] + v[1] + v[2]) / 3.0).transpose();
    double r[3][3];
    frame_from_triangle(v[0].data(), v[1].data(), v[2].data(), r);
    auto& m = out.rotations[static_cast<size_t>(i)];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) m(a, b) = r[a][b];
  }
  return out;
}

double mean_edge_length(const morphable::MorphableModel& model, const Mat& vertices) {
  if (model.triangles.empty()) throw ArgumentError("mean_edge_length: model has no triangles");
  double total = 0.0;
  for (const auto& t : model.triangles) {
    for (int k = 0; k < 3; ++k) {
      total += (vertices.row(t[static_cast<size_t>(k)]) - vertices.row(t[static_cast<size_t>((k + 1) % 3)])).norm();
    }
  }
  return total / (3.0 * static_cast<double>(model.triangles.size()));
}

GaussianSet animate_template(const GaussianSet& templ, const Mat& ref_vertices, const ag::Tensor& new_vertices) {
  if (new_vertices.rows() != ref_vertices.rows() || new_vertices.cols() != 3 || templ.size() != ref_vertices.rows()) {
    throw ArgumentError("animate: vertex count mismatch");
  }
  GaussianSet out = templ;
  const Mat offset = templ.mu.value() - ref_vertices;
  out.mu = offset.isZero(0.0) ? new_vertices : ag::add(ag::Tensor::constant(offset), new_vertices);
  return out;
}

GaussianSet animate_uv(const GaussianSet& uv, const ag::Tensor& offset, const morphable::MorphableModel& model,
                       const TriangleFrames& ref_frames, const ag::Tensor& new_vertices) {
  const auto f = static_cast<Index>(model.triangles.size());
  if (new_vertices.rows() != model.num_vertices || new_vertices.cols() != 3) {
    throw ArgumentError("animate: vertex count mismatch");
  }
  if (uv.size() != f || offset.rows() != f || offset.cols() != 3 ||
      static_cast<Index>(ref_frames.rotations.size()) != f) {
    throw ArgumentError("animate: UV set does not match the triangle count");
  }
  const Mat& nv = new_vertices.value();
  const TriangleFrames cur = triangle_frames(model, nv);
  std::vector<Eigen::Matrix3d> carry(static_cast<size_t>(f));
  Mat mu(f, 3);
  for (Index i = 0; i < f; ++i) {
    const auto k = static_cast<size_t>(i);
    carry[k] = cur.rotations[k] * ref_frames.rotations[k].transpose();
    mu.row(i) = cur.barycenters.row(i) + (carry[k] * offset.value().row(i).transpose()).transpose();
  }
  const auto tris = model.triangles;
  std::vector<Eigen::Matrix3d> ref_copy(ref_frames.rotations);
  ag::NodePtr vn = new_vertices.node(), dn = offset.node();
  GaussianSet out = uv;
  out.mu = ag::make_op(std::move(mu), {new_vertices, offset},
                       [tris, carry, ref_copy, vn, dn](const Mat& g, const std::vector<Mat*>& gi) {
                         using J = ceres::Jet<double, 9>;
                         for (size_t i = 0; i < tris.size(); ++i) {
                           const auto row = static_cast<Index>(i);
                           const Eigen::Vector3d gr = g.row(row).transpose();
                           if (gi[1]) gi[1]->row(row) += (carry[i].transpose() * gr).transpose();
                           if (!gi[0]) continue;
                           J v[3][3];
                           for (int a = 0; a < 3; ++a)
                             for (int b = 0; b < 3; ++b) v[a][b] = J(vn->value(tris[i][static_cast<size_t>(a)], b), 3 * a + b);
                           J r[3][3];
                           frame_from_triangle(v[0], v[1], v[2], r);
                           const Eigen::Vector3d local = ref_copy[i].transpose() * dn->value.row(row).transpose();
                           Eigen::Matrix<double, 9, 1> d = Eigen::Matrix<double, 9, 1>::Zero();
                           for (int k = 0; k < 3; ++k) {
                             J m = (v[0][k] + v[1][k] + v[2][k]) / 3.0;
                             for (int j = 0; j < 3; ++j) m += r[k][j] * local(j);
                             d += gr(k) * m.v;
                           }
                           for (int a = 0; a < 3; ++a)
                             gi[0]->row(tris[i][static_cast<size_t>(a)]) += d.segment<3>(3 * a).transpose();
                         }
                       });
  return out;
}

GaussianSet animate(const MeshGaussians& gaussians, const morphable::MorphableModel& model,
                    const ag::Tensor& new_vertices) {
  GaussianSet t = animate_template(gaussians.templ, gaussians.ref_vertices, new_vertices);
  if (gaussians.uv.size() == 0) return t;
  GaussianSet u = animate_uv(gaussians.uv, gaussians.uv_offset, model, gaussians.ref_frames, new_vertices);
  return concat(t, u);
}

}  // namespace mango::renderer

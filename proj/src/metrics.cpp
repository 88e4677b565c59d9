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

#include "mango/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mango/core/errors.hpp"

namespace mango::metrics {

namespace {

double vertex_distance(const Mat& a, const Mat& b, Index t, int v) {
  return (a.row(t).segment<3>(3 * v) - b.row(t).segment<3>(3 * v)).norm();
}

void check_sequences(const Mat& pred, const Mat& gt, const MeshTopology& topo) {
  if (pred.rows() != gt.rows()) throw ArgumentError("mesh metrics: sequence lengths differ");
  if (pred.cols() != 3 * topo.num_vertices || gt.cols() != 3 * topo.num_vertices) {
    throw ArgumentError("mesh metrics: vertex count does not match the topology");
  }
  if (pred.rows() == 0) throw ArgumentError("mesh metrics: empty sequence");
}

double population_std(const Vec& x) {
  if (x.size() == 0) return 0.0;
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().mean());
}

Mat sqrt_psd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Mat covariance(const Mat& x) {
  const RowVec mu = x.colwise().mean();
  const Mat c = x.rowwise() - mu;
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Mat gaussian_window() {
  Mat w(11, 11);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) w(i, j) = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
  return w / w.sum();
}

Mat rows_where(const Mat& x, const std::vector<uint8_t>& ind, uint8_t state, Index start, Index count) {
  std::vector<Index> rows;
  for (Index t = 0; t < x.rows(); ++t)
    if (ind[static_cast<size_t>(t)] == state) rows.push_back(t);
  Mat out(static_cast<Index>(rows.size()), count);
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]).segment(start, count);
  return out;
}

Mat stack(const std::vector<Mat>& parts, Index cols) {
  Index n = 0;
  for (const auto& p : parts) n += p.rows();
  Mat out(n, cols);
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

}  // namespace

MeshTopology MeshTopology::from_model(const morphable::MorphableModel& model, const Vec& beta) {
  MeshTopology t;
  t.num_vertices = model.num_vertices;
  t.lip_all = model.lip_all;
  t.upper_face = model.upper_face;
  t.lip_upper = model.lip_upper;
  t.lip_lower = model.lip_lower;
  t.neutral = morphable::decode_zero_pose(model, beta, Mat::Zero(1, model.motion_dim()));
  return t;
}

Vec lip_opening_curve(const Mat& flat, const MeshTopology& topo) {
  if (topo.lip_upper.empty() || topo.lip_upper.size() != topo.lip_lower.size()) {
    throw ArgumentError("lip opening: lip pairs missing");
  }
  Vec c(flat.rows());
  for (Index t = 0; t < flat.rows(); ++t) {
    double total = 0.0;
    for (size_t i = 0; i < topo.lip_upper.size(); ++i) {
      total += (flat.row(t).segment<3>(3 * topo.lip_upper[i]) - flat.row(t).segment<3>(3 * topo.lip_lower[i])).norm();
    }
    c(t) = total / static_cast<double>(topo.lip_upper.size());
  }
  return c;
}

MeshMetrics mesh_metrics_vertices(const Mat& pred, const Mat& gt, const MeshTopology& topo) {
  check_sequences(pred, gt, topo);
  if (topo.lip_all.empty()) throw ArgumentError("mesh metrics: no lip vertices");
  const Index frames = pred.rows();
  MeshMetrics m;
  double lve = 0.0, mve = 0.0;
  for (Index t = 0; t < frames; ++t) {
    double worst = 0.0;
    for (int v : topo.lip_all) worst = std::max(worst, vertex_distance(pred, gt, t, v));
    lve += worst;
    for (int v = 0; v < static_cast<int>(topo.num_vertices); ++v) mve += vertex_distance(pred, gt, t, v);
  }
  m.lve = lve / static_cast<double>(frames);
  m.mve = mve / static_cast<double>(frames * topo.num_vertices);

  const bool has_neutral = topo.neutral.size() == 3 * topo.num_vertices;
  double fdd = 0.0;
  for (int v : topo.upper_face) {
    Vec dp(frames), dg(frames);
    for (Index t = 0; t < frames; ++t) {
      const Eigen::Vector3d base =
          has_neutral ? Eigen::Vector3d(topo.neutral.segment<3>(3 * v).transpose()) : Eigen::Vector3d::Zero();
      dp(t) = (pred.row(t).segment<3>(3 * v).transpose() - base).norm();
      dg(t) = (gt.row(t).segment<3>(3 * v).transpose() - base).norm();
    }
    fdd += std::abs(population_std(dp) - population_std(dg));
  }
  m.fdd = topo.upper_face.empty() ? 0.0 : fdd / static_cast<double>(topo.upper_face.size());
  m.mod = (lip_opening_curve(pred, topo) - lip_opening_curve(gt, topo)).cwiseAbs().mean();
  return m;
}

MeshMetrics mesh_metrics(const morphable::MotionSequence& pred, const morphable::MotionSequence& gt, const Vec& beta,
                         const morphable::MorphableModel& model) {
  if (pred.rows() != gt.rows()) throw ArgumentError("mesh metrics: sequence lengths differ");
  return mesh_metrics_vertices(morphable::decode_zero_pose(model, beta, pred),
                               morphable::decode_zero_pose(model, beta, gt), MeshTopology::from_model(model, beta));
}

Correlation pearson(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ArgumentError("pearson: length mismatch");
  Correlation c;
  if (a.size() < 2) {
    c.degenerate = true;
    return c;
  }
  const Vec da = a.array() - a.mean(), db = b.array() - b.mean();
  const double na = da.norm(), nb = db.norm();
  if (na == 0.0 || nb == 0.0) {
    c.degenerate = true;
    return c;
  }
  c.value = da.dot(db) / (na * nb);
  return c;
}

int misalignment_lag(const Vec& pred, const Vec& gt, int max_lag, MtmStrategy strategy) {
  if (strategy != MtmStrategy::kCrossCorrelationLag) throw ArgumentError("unknown misalignment strategy");
  if (pred.size() != gt.size()) throw ArgumentError("misalignment: curve lengths differ");
  const Index n = pred.size();
  int best = 0;
  double best_corr = -std::numeric_limits<double>::infinity();
  // Visit lags by increasing |tau| so a strict improvement is needed to move away from zero.
  for (int a = 0; a <= max_lag; ++a) {
    for (int tau : {a, -a}) {
      const Index len = n - std::abs(tau);
      if (len < 2) continue;
      const Vec p = tau >= 0 ? Vec(pred.segment(tau, len)) : Vec(pred.segment(0, len));
      const Vec g = tau >= 0 ? Vec(gt.segment(0, len)) : Vec(gt.segment(-tau, len));
      const double c = pearson(p, g).value;
      if (c > best_corr) {
        best_corr = c;
        best = tau;
      }
    }
  }
  return best;
}

SyncMetrics sync_metrics_curves(const Vec& pred_curve, const Vec& gt_curve, const Vec& energy) {
  if (pred_curve.size() != gt_curve.size() || pred_curve.size() != energy.size()) {
    throw ArgumentError("sync metrics: curve lengths differ");
  }
  SyncMetrics s;
  s.mtm = std::abs(misalignment_lag(pred_curve, gt_curve));
  const Correlation c = pearson(pred_curve, energy);
  s.slcc = c.value;
  s.slcc_degenerate = c.degenerate;
  return s;
}

SyncMetrics sync_metrics(const morphable::MotionSequence& pred, const morphable::MotionSequence& gt,
                         const Vec& energy, const morphable::MorphableModel& model, const Vec& beta) {
  if (pred.rows() != gt.rows() || pred.rows() != energy.size()) throw ArgumentError("sync metrics: lengths differ");
  const MeshTopology topo = MeshTopology::from_model(model, beta);
  return sync_metrics_curves(lip_opening_curve(morphable::decode_zero_pose(model, beta, pred), topo),
                             lip_opening_curve(morphable::decode_zero_pose(model, beta, gt), topo), energy);
}

FrechetResult frechet_distance(const Mat& x, const Mat& y) {
  if (x.cols() != y.cols()) throw ArgumentError("frechet: dimension mismatch");
  if (x.rows() < 2 || y.rows() < 2) throw ArgumentError("frechet: need at least two samples per side");
  const Index d = x.cols();
  Mat s1 = covariance(x), s2 = covariance(y);
  const RowVec dm = x.colwise().mean() - y.colwise().mean();
  FrechetResult r;
  auto min_eig = [](const Mat& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  if (min_eig(s1) <= 1e-12 || min_eig(s2) <= 1e-12) {
    s1 += 1e-6 * Mat::Identity(d, d);
    s2 += 1e-6 * Mat::Identity(d, d);
    r.regularized = true;
  }
  const Mat a = sqrt_psd(s1);
  const Mat m = a * s2 * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  r.value = dm.squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return r;
}

std::vector<ParamGroup> param_groups(Index num_expr) {
  return {{"exp", 0, num_expr}, {"jaw", num_expr, 3}, {"pose", num_expr + 3, 3}};
}

double sample_diversity(const std::vector<Mat>& gens, Index start, Index count) {
  if (gens.size() < 2) return 0.0;
  const Index frames = gens.front().rows();
  for (const auto& g : gens)
    if (g.rows() != frames) throw ArgumentError("sample diversity: generations differ in length");
  double total = 0.0;
  for (Index t = 0; t < frames; ++t) {
    double s = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < gens.size(); ++i)
      for (size_t j = i + 1; j < gens.size(); ++j, ++pairs)
        s += (gens[i].row(t).segment(start, count) - gens[j].row(t).segment(start, count)).norm();
    total += s / static_cast<double>(pairs);
  }
  return frames > 0 ? total / static_cast<double>(frames) : 0.0;
}

DistributionMetrics pooled_distribution_metrics(const std::vector<Mat>& generated, const std::vector<Mat>& reference,
                                                const std::vector<std::vector<uint8_t>>& indicators, Index num_expr) {
  if (generated.size() != reference.size() || generated.size() != indicators.size()) {
    throw ArgumentError("distribution metrics: generated, reference and indicator counts differ");
  }
  for (size_t i = 0; i < generated.size(); ++i) {
    if (generated[i].rows() != reference[i].rows() ||
        static_cast<size_t>(generated[i].rows()) != indicators[i].size()) {
      throw ArgumentError("distribution metrics: sequence " + std::to_string(i) + " lengths differ");
    }
  }
  DistributionMetrics out;
  for (const auto& g : param_groups(num_expr)) {
    for (uint8_t state : {uint8_t{1}, uint8_t{0}}) {
      std::vector<Mat> gp, rp;
      for (size_t i = 0; i < generated.size(); ++i) {
        gp.push_back(rows_where(generated[i], indicators[i], state, g.start, g.count));
        rp.push_back(rows_where(reference[i], indicators[i], state, g.start, g.count));
      }
      const std::string key = "FD_" + g.name + (state ? "_S" : "_L");
      const Mat x = stack(gp, g.count), y = stack(rp, g.count);
      if (x.rows() < 2 || y.rows() < 2) {
        out.fd[key] = 0.0;
        out.flags.push_back(key + ": fewer than two frames in state");
        continue;
      }
      const FrechetResult r = frechet_distance(x, y);
      out.fd[key] = r.value;
      if (r.regularized) out.flags.push_back(key + ": covariance regularized");
    }
    out.sid["SID_" + g.name] = sample_diversity(generated, g.start, g.count);
  }
  return out;
}

DistributionMetrics distribution_metrics(const std::vector<Mat>& generated, const std::vector<Mat>& reference,
                                         const std::vector<std::vector<uint8_t>>& indicators, Index num_expr) {
  if (generated.size() < 2 || reference.size() < 2) {
    throw ArgumentError("distribution metrics: need at least two sequences per side");
  }
  return pooled_distribution_metrics(generated, reference, indicators, num_expr);
}

double psnr(const Mat& pred, const Mat& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw ArgumentError("psnr: dimension mismatch");
  const double mse = (pred - gt).squaredNorm() / static_cast<double>(pred.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Mat& pred, const Mat& gt, int height, int width) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.rows() != static_cast<Index>(height) * width) {
    throw ArgumentError("ssim: dimension mismatch");
  }
  if (height < 11 || width < 11) throw ArgumentError("ssim: image smaller than the 11x11 window");
  static const Mat w = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  Index windows = 0;
  for (Index ch = 0; ch < pred.cols(); ++ch) {
    for (int y = 0; y + 11 <= height; ++y) {
      for (int x = 0; x + 11 <= width; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const Index p = static_cast<Index>(y + i) * width + x + j;
            const double a = pred(p, ch), b = gt(p, ch), k = w(i, j);
            mx += k * a;
            my += k * b;
            sxx += k * a * a;
            syy += k * b * b;
            sxy += k * a * b;
          }
        }
        sxx -= mx * mx;
        syy -= my * my;
        sxy -= mx * my;
        total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

ImageMetrics image_metrics(const std::vector<io::Image>& pred, const std::vector<io::Image>& gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ArgumentError("image metrics: frame counts differ or are zero");
  ImageMetrics m;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].width != gt[i].width || pred[i].height != gt[i].height) {
      throw ArgumentError("image metrics: frame " + std::to_string(i) + " dimensions differ");
    }
    m.psnr += psnr(pred[i].pixels, gt[i].pixels);
    m.ssim += ssim(pred[i].pixels, gt[i].pixels, pred[i].height, pred[i].width);
  }
  m.psnr /= static_cast<double>(pred.size());
  m.ssim /= static_cast<double>(pred.size());
  return m;
}

LipCurve lip_curve_annotated(const Mat& kp) {
  if (kp.cols() == 0 || kp.cols() % 4) throw ArgumentError("lip curve: expected 4 columns per keypoint pair");
  LipCurve c;
  c.values = Vec::Zero(kp.rows());
  c.valid.assign(static_cast<size_t>(kp.rows()), false);
  for (Index t = 0; t < kp.rows(); ++t) {
    if (!kp.row(t).allFinite()) continue;
    double total = 0.0;
    for (Index p = 0; p < kp.cols() / 4; ++p) total += (kp.row(t).segment<2>(4 * p) - kp.row(t).segment<2>(4 * p + 2)).norm();
    c.values(t) = total / static_cast<double>(kp.cols() / 4);
    c.valid[static_cast<size_t>(t)] = true;
  }
  return c;
}

LipCurve lip_curve_projected(const Mat& flat, const morphable::MorphableModel& model,
                             const morphable::CameraPose& camera) {
  if (flat.cols() != 3 * model.num_vertices) throw ArgumentError("lip curve: vertex count mismatch");
  if (model.lip_upper.empty()) throw ArgumentError("lip curve: model has no lip keypoints");
  const auto pairs = static_cast<Index>(model.lip_upper.size());
  Mat kp(flat.rows(), 4 * pairs);
  Mat pts(2 * pairs, 3);
  for (Index t = 0; t < flat.rows(); ++t) {
    for (Index p = 0; p < pairs; ++p) {
      pts.row(2 * p) = flat.row(t).segment<3>(3 * model.lip_upper[static_cast<size_t>(p)]);
      pts.row(2 * p + 1) = flat.row(t).segment<3>(3 * model.lip_lower[static_cast<size_t>(p)]);
    }
    const morphable::Projection pr = morphable::project(pts, camera);
    for (Index k = 0; k < 2 * pairs; ++k) {
      if (pr.valid[static_cast<size_t>(k)]) {
        kp.row(t).segment<2>(2 * k) = pr.pixels.row(k);
      } else {
        kp.row(t).segment<2>(2 * k).setConstant(std::numeric_limits<double>::quiet_NaN());
      }
    }
  }
  return lip_curve_annotated(kp);
}

std::vector<std::string> report_keys() {
  return {"LVE",       "MVE",       "FDD",        "MOD",       "MTM",       "SLCC",    "PSNR",    "SSIM",
          "FD_exp_S",  "FD_exp_L",  "FD_jaw_S",   "FD_jaw_L",  "FD_pose_S", "FD_pose_L", "SID_exp", "SID_jaw",
          "SID_pose"};
}

io::Json MetricReport::to_json() const {
  io::Json j;
  io::Json s = io::Json::object();
  for (const auto& [k, v] : scalars) s[k] = v ? io::Json(*v) : io::Json(nullptr);
  j["metrics"] = s;
  j["units"] = {{"LVE", "mm"}, {"MVE", "mm"}, {"FDD", "mm"}, {"MOD", "mm"}, {"MTM", "frames"}, {"PSNR", "dB"}};
  io::Json c = io::Json::object();
  for (const auto& [k, v] : curves) c[k] = std::vector<double>(v.data(), v.data() + v.size());
  j["curves"] = c;
  j["flags"] = flags;
  return j;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n";
  for (const auto& [k, v] : scalars) {
    os << k << ',';
    if (v) os << *v;
    os << '\n';
  }
  return os.str();
}

MetricReport evaluate(const EvaluationInputs& in, const morphable::MorphableModel& model) {
  const Index frames = in.gt.rows();
  if (in.pred.rows() != frames || static_cast<Index>(in.indicator.size()) != frames || in.energy.size() != frames) {
    throw ArgumentError("evaluate: prediction, ground truth, indicator and energy lengths differ");
  }
  MetricReport r;
  const MeshTopology topo = MeshTopology::from_model(model, in.beta);
  const Mat vp = morphable::decode_zero_pose(model, in.beta, in.pred);
  const Mat vg = morphable::decode_zero_pose(model, in.beta, in.gt);
  const MeshMetrics mm = mesh_metrics_vertices(vp, vg, topo);
  r.scalars["LVE"] = 1e3 * mm.lve;
  r.scalars["MVE"] = 1e3 * mm.mve;
  r.scalars["FDD"] = 1e3 * mm.fdd;
  r.scalars["MOD"] = 1e3 * mm.mod;
  const Vec cp = lip_opening_curve(vp, topo), cg = lip_opening_curve(vg, topo);
  const SyncMetrics sm = sync_metrics_curves(cp, cg, in.energy);
  r.scalars["MTM"] = sm.mtm;
  r.scalars["SLCC"] = sm.slcc;
  if (sm.slcc_degenerate) r.flags.push_back("SLCC: constant curve");
  r.curves["lip_opening_pred"] = cp;
  r.curves["lip_opening_gt"] = cg;

  std::vector<Mat> gens{in.pred};
  for (const auto& s : in.pred_samples) gens.push_back(s);
  std::vector<Mat> refs(gens.size(), in.gt);
  std::vector<std::vector<uint8_t>> inds(gens.size(), in.indicator);
  const DistributionMetrics dm = pooled_distribution_metrics(gens, refs, inds, model.num_expr);
  for (const auto& [k, v] : dm.fd) r.scalars[k] = v;
  for (const auto& [k, v] : dm.sid) r.scalars[k] = v;
  for (const auto& f : dm.flags) r.flags.push_back(f);
  if (gens.size() < 2) r.flags.push_back("SID: single generation");

  if (!in.pred_frames.empty() && !in.gt_frames.empty()) {
    const ImageMetrics im = image_metrics(in.pred_frames, in.gt_frames);
    r.scalars["PSNR"] = im.psnr;
    r.scalars["SSIM"] = im.ssim;
  } else {
    r.scalars["PSNR"] = std::nullopt;
    r.scalars["SSIM"] = std::nullopt;
    r.flags.push_back("PSNR/SSIM: frames unavailable");
  }
  return r;
}

void write_report(const MetricReport& report, const std::filesystem::path& json_path) {
  io::write_json(json_path, report.to_json());
  std::filesystem::path csv = json_path;
  csv.replace_extension(".csv");
  std::ofstream os(csv, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + csv.string());
  os << report.to_csv();
}

void write_curve_csv(const std::filesystem::path& path, const Vec& x, const Vec& y, const std::string& x_name,
                     const std::string& y_name) {
  if (x.size() != y.size()) throw ArgumentError("curve csv: length mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << x_name << ',' << y_name << '\n';
  for (Index i = 0; i < x.size(); ++i) os << x(i) << ',' << y(i) << '\n';
}

void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series, int width,
                     int height) {
  io::Image img;
  img.width = width;
  img.height = height;
  img.pixels = Mat::Ones(static_cast<Index>(width) * height, 3);
  auto put = [&](int x, int y, const std::array<uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    for (int k = 0; k < 3; ++k) img.pixels(static_cast<Index>(y) * width + x, k) = c[static_cast<size_t>(k)] / 255.0;
  };
  auto line = [&](int x0, int y0, int x1, int y1, const std::array<uint8_t, 3>& c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0), sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  };
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (Index i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x(i)) || !std::isfinite(s.y(i))) continue;
      if (first) {
        xmin = xmax = s.x(i);
        ymin = ymax = s.y(i);
        first = false;
      }
      xmin = std::min(xmin, s.x(i));
      xmax = std::max(xmax, s.x(i));
      ymin = std::min(ymin, s.y(i));
      ymax = std::max(ymax, s.y(i));
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const int m = 24;
  const std::array<uint8_t, 3> axis{96, 96, 96};
  line(m, height - m, width - m, height - m, axis);
  line(m, m, m, height - m, axis);
  auto sx = [&](double x) { return m + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (width - 2 * m))); };
  auto sy = [&](double y) {
    return height - m - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (height - 2 * m)));
  };
  for (const auto& s : series) {
    for (Index i = 1; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y(i - 1)) || !std::isfinite(s.y(i))) continue;
      line(sx(s.x(i - 1)), sy(s.y(i - 1)), sx(s.x(i)), sy(s.y(i)), s.color);
    }
  }
  io::write_png(path, img);
}

io::Json run_external_scorer(const std::string& command, const std::filesystem::path& frames_dir) {
  const std::string cmd = command + " '" + frames_dir.string() + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("cannot start external scorer: " + command);
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  if (status != 0) throw std::runtime_error("external scorer exited with status " + std::to_string(status));
  try {
    return io::Json::parse(out);
  } catch (const io::Json::exception& e) {
    throw FormatError(std::string("external scorer output is not JSON: ") + e.what());
  }
}

}  // namespace mango::metrics

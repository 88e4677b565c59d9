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

#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "mango/core/errors.hpp"
#include "mango/dataio.hpp"
#include "mango/metrics.hpp"
#include "oracles.hpp"

using namespace mango;
using namespace mango::metrics;

namespace {

// Random toy mesh topology with `verts` vertices.
MeshTopology toy_topology(int verts, uint64_t seed) {
  MeshTopology t;
  t.num_vertices = verts;
  t.lip_upper = {0, 1, 2};
  t.lip_lower = {3, 4, 5};
  t.lip_all = {0, 1, 2, 3, 4, 5};
  for (int v = 6; v < verts; v += 2) t.upper_face.push_back(v);
  t.neutral = test::random_mat(1, 3 * verts, seed, 0.05);
  return t;
}

}  // namespace

TEST_CASE("mesh metrics agree with brute force on random small instances") {
  for (uint64_t s = 0; s < 5; ++s) {
    const int verts = 12 + static_cast<int>(s) * 2;
    const Index frames = 10 + static_cast<Index>(s) * 2;
    const MeshTopology topo = toy_topology(verts, 100 + s);
    const Mat gt = test::random_mat(frames, 3 * verts, 200 + s, 0.05);
    const Mat pred = gt + test::random_mat(frames, 3 * verts, 300 + s, 0.01);
    const MeshMetrics m = mesh_metrics_vertices(pred, gt, topo);
    CHECK(m.lve == doctest::Approx(oracle::lve(pred, gt, topo.lip_all)).epsilon(1e-10));
    CHECK(m.mve == doctest::Approx(oracle::mve(pred, gt)).epsilon(1e-10));
    CHECK(m.fdd == doctest::Approx(oracle::fdd(pred, gt, topo.neutral, topo.upper_face)).epsilon(1e-10));
    CHECK(m.mod == doctest::Approx(oracle::mod(pred, gt, topo.lip_upper, topo.lip_lower)).epsilon(1e-10));
  }
}

TEST_CASE("identical sequences give zero mesh metrics") {
  const MeshTopology topo = toy_topology(12, 1);
  const Mat gt = test::random_mat(10, 36, 2);
  const MeshMetrics m = mesh_metrics_vertices(gt, gt, topo);
  CHECK(m.lve == 0.0);
  CHECK(m.mve == 0.0);
  CHECK(m.fdd == 0.0);
  CHECK(m.mod == 0.0);
  CHECK_THROWS_AS(mesh_metrics_vertices(gt.topRows(9), gt, topo), ArgumentError);
}

TEST_CASE("one lip vertex offset by 2 mm") {
  const MeshTopology topo = toy_topology(12, 3);
  Mat gt = Mat::Zero(10, 36);
  for (Index t = 0; t < 10; ++t)
    for (int p = 0; p < 3; ++p) {
      gt(t, 3 * p + 1) = 0.01;       // upper lip at y = +1 cm
      gt(t, 3 * (p + 3) + 1) = 0.0;  // lower lip at y = 0
    }
  Mat pred = gt;
  for (Index t = 0; t < 10; ++t) pred(t, 3 * 1 + 1) += 0.002;  // upper lip vertex 1 moves up 2 mm
  const MeshMetrics m = mesh_metrics_vertices(pred, gt, topo);
  CHECK(m.lve == doctest::Approx(0.002));
  // only one of three pairs changes, by 2 mm
  CHECK(m.mod == doctest::Approx(0.002 / 3));
  CHECK(m.mve == doctest::Approx(0.002 / 12));
}

TEST_CASE("mesh metrics on decoded motion") {
  const auto& model = dataio::desk_model();
  const Vec beta = test::random_mat(model.num_shape, 1, 5, 0.5);
  const Mat gt = test::random_mat(6, 56, 6, 0.1);
  const Mat pred = gt + test::random_mat(6, 56, 7, 0.05);
  const MeshMetrics m = mesh_metrics(pred, gt, beta, model);
  const Mat pv = morphable::decode_zero_pose(model, beta, pred), gv = morphable::decode_zero_pose(model, beta, gt);
  CHECK(m.lve == doctest::Approx(oracle::lve(pv, gv, model.lip_all)).epsilon(1e-10));
  CHECK(m.mve == doctest::Approx(oracle::mve(pv, gv)).epsilon(1e-10));
  // head pose alone leaves the zero-head-posed metrics untouched
  Mat turned = gt;
  turned.col(54).array() += 0.4;
  const MeshMetrics z = mesh_metrics(turned, gt, beta, model);
  CHECK(z.mve < 1e-12);
}

TEST_CASE("pearson and degenerate flag") {
  const Vec a = test::random_mat(20, 1, 8);
  const Vec b = test::random_mat(20, 1, 9);
  CHECK(pearson(a, b).value == doctest::Approx(oracle::pearson(oracle::to_std(a), oracle::to_std(b))).epsilon(1e-12));
  const Correlation d = pearson(a, Vec::Constant(20, 3.0));
  CHECK(d.degenerate);
  CHECK(d.value == 0.0);
}

TEST_CASE("misalignment lag recovers a planted shift and matches brute force") {
  const Vec gt = test::random_mat(60, 1, 10);
  for (int shift : {-5, -1, 0, 3, 7}) {
    Vec pred = Vec::Zero(60);
    for (Index t = 0; t < 60; ++t) {
      const Index s = t - shift;
      if (s >= 0 && s < 60) pred(t) = gt(s);
    }
    CHECK(misalignment_lag(pred, gt) == shift);
    CHECK(misalignment_lag(pred, gt) == oracle::mtm(pred, gt, kMaxLag));
  }
  for (uint64_t s = 0; s < 10; ++s) {
    const Vec p = test::random_mat(20, 1, 400 + s), g = test::random_mat(20, 1, 500 + s);
    CHECK(misalignment_lag(p, g) == oracle::mtm(p, g, kMaxLag));
  }
  const SyncMetrics same = sync_metrics_curves(gt, gt, gt.cwiseAbs());
  CHECK(same.mtm == 0.0);
}

TEST_CASE("SLCC of an affine function of energy is one") {
  const Vec e = test::random_mat(30, 1, 11).cwiseAbs();
  const Vec curve = (2.5 * e.array() + 0.7).matrix();
  const SyncMetrics s = sync_metrics_curves(curve, curve, e);
  CHECK(std::abs(s.slcc - 1.0) < 1e-9);
  CHECK_FALSE(s.slcc_degenerate);
  const SyncMetrics flat = sync_metrics_curves(Vec::Constant(30, 1.0), curve, e);
  CHECK(flat.slcc_degenerate);
  CHECK(flat.slcc == 0.0);
}

TEST_CASE("Frechet distance") {
  SUBCASE("matches the one-dimensional closed form") {
    const Mat x = test::random_mat(50, 1, 12);
    const Mat y = (test::random_mat(40, 1, 13).array() * 2.0 + 1.0).matrix();
    auto moments = [](const Mat& m, double& mean, double& sd) {
      mean = m.mean();
      sd = std::sqrt((m.array() - mean).square().sum() / static_cast<double>(m.rows() - 1));
    };
    double m1, s1, m2, s2;
    moments(x, m1, s1);
    moments(y, m2, s2);
    CHECK(frechet_distance(x, y).value == doctest::Approx((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2)).epsilon(1e-12));
  }
  SUBCASE("unit gaussians one apart") {
    Mat x(4, 1), y(4, 1);
    x << -1, 1, -1, 1;
    y << 0, 2, 0, 2;
    const double sd = std::sqrt(4.0 / 3.0);
    (void)sd;
    CHECK(frechet_distance(x, y).value == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("multi-dimensional agrees with the eigenvalue oracle and vanishes on itself") {
    const Mat x = test::random_mat(20, 5, 14);
    const Mat y = test::random_mat(20, 5, 15) * 1.5;
    const FrechetResult r = frechet_distance(x, y);
    CHECK_FALSE(r.regularized);
    CHECK(r.value == doctest::Approx(oracle::frechet(x, y)).epsilon(1e-8));
    CHECK(std::abs(frechet_distance(x, x).value) < 1e-9);
  }
  SUBCASE("singular covariance is regularized and flagged") {
    Mat x = test::random_mat(10, 3, 16);
    x.col(2).setZero();
    const FrechetResult r = frechet_distance(x, x);
    CHECK(r.regularized);
    CHECK(std::abs(r.value) < 1e-6);
  }
}

TEST_CASE("distribution metrics split by state and group") {
  std::vector<Mat> gen, ref;
  std::vector<std::vector<uint8_t>> ind;
  for (uint64_t s = 0; s < 3; ++s) {
    ref.push_back(test::random_mat(20, 56, 600 + s));
    gen.push_back(ref.back());
    std::vector<uint8_t> bits(20);
    for (size_t t = 0; t < 20; ++t) bits[t] = (t / 5) % 2;
    ind.push_back(bits);
  }
  const DistributionMetrics self = distribution_metrics(gen, ref, ind, 50);
  CHECK(self.fd.size() == 6);
  for (const auto& [k, v] : self.fd) CHECK(std::abs(v) < 1e-6);
  CHECK(self.sid.at("SID_exp") == doctest::Approx(oracle::sid(gen, 0, 50)).epsilon(1e-12));
  CHECK_THROWS_AS(distribution_metrics({gen[0]}, {ref[0]}, {ind[0]}, 50), ArgumentError);

  gen[1] = test::random_mat(20, 56, 700);
  const DistributionMetrics d = distribution_metrics(gen, ref, ind, 50);
  // oracle: stack speaking-state jaw rows
  Mat x(30, 3), y(30, 3);
  Index r = 0;
  for (size_t i = 0; i < 3; ++i)
    for (Index t = 0; t < 20; ++t)
      if (ind[i][static_cast<size_t>(t)] == 1) {
        x.row(r) = gen[i].row(t).segment(50, 3);
        y.row(r) = ref[i].row(t).segment(50, 3);
        ++r;
      }
  CHECK(d.fd.at("FD_jaw_S") == doctest::Approx(oracle::frechet(x, y)).epsilon(1e-8));
  CHECK(d.sid.at("SID_pose") == doctest::Approx(oracle::sid(gen, 53, 3)).epsilon(1e-12));
}

TEST_CASE("sample diversity matches pairwise loops") {
  std::vector<Mat> g{test::random_mat(8, 56, 1), test::random_mat(8, 56, 2), test::random_mat(8, 56, 3)};
  CHECK(sample_diversity(g, 0, 50) == doctest::Approx(oracle::sid(g, 0, 50)).epsilon(1e-12));
  std::vector<Mat> same{g[0], g[0], g[0]};
  CHECK(sample_diversity(same, 0, 56) == 0.0);
}

TEST_CASE("PSNR and SSIM") {
  const Mat a = Mat::Constant(16 * 16, 3, 0.5), b = Mat::Constant(16 * 16, 3, 0.25);
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(1 / 0.0625)));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(ssim(a, a, 16, 16) == doctest::Approx(1.0));
  const Mat x = (test::random_mat(16 * 16, 3, 17).array() * 0.2 + 0.5).matrix();
  const Mat y = (x + test::random_mat(16 * 16, 3, 18, 0.05)).cwiseMax(0.0).cwiseMin(1.0);
  CHECK(ssim(x, y, 16, 16) == doctest::Approx(oracle::ssim(x, y, 16, 16)).epsilon(1e-9));
  CHECK(psnr(x, y) == doctest::Approx(oracle::psnr(x, y)).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(x, y, 8, 32 * 1), ArgumentError);
}

TEST_CASE("lip curves") {
  const auto& model = dataio::desk_model();
  const auto cam = morphable::frontal_camera();
  SUBCASE("static mouth gives a constant curve") {
    Mat motion = Mat::Zero(5, 56);
    const LipCurve c = lip_curve_projected(morphable::decode_sequence(model, Vec::Zero(8), motion, false), model, cam);
    CHECK((c.values.array() - c.values(0)).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("sinusoidal jaw keeps its period") {
    Mat motion = Mat::Zero(100, 56);
    for (Index t = 0; t < 100; ++t) motion(t, 50) = 0.15 * (1 - std::cos(2 * M_PI * t / 20.0));
    const LipCurve c = lip_curve_projected(morphable::decode_sequence(model, Vec::Zero(8), motion, false), model, cam);
    Vec ref(100);
    for (Index t = 0; t < 100; ++t) ref(t) = 1 - std::cos(2 * M_PI * t / 20.0);
    CHECK(pearson(c.values, ref).value > 0.99);
    Index hi;
    c.values.head(20).maxCoeff(&hi);
    CHECK(hi == 10);
  }
  SUBCASE("missing keypoints mark frames invalid") {
    Mat kp = test::random_mat(4, 8, 20);
    kp(2, 3) = std::numeric_limits<double>::quiet_NaN();
    const LipCurve c = lip_curve_annotated(kp);
    CHECK(c.valid == std::vector<bool>{true, true, false, true});
    const double expect = ((kp.row(0).segment<2>(0) - kp.row(0).segment<2>(2)).norm() +
                           (kp.row(0).segment<2>(4) - kp.row(0).segment<2>(6)).norm()) / 2;
    CHECK(c.values(0) == doctest::Approx(expect));
  }
}

TEST_CASE("report export") {
  const auto& model = dataio::desk_model();
  EvaluationInputs in;
  in.gt = test::random_mat(30, 56, 21, 0.1);
  in.pred = in.gt + test::random_mat(30, 56, 22, 0.05);
  in.indicator.resize(30);
  for (size_t t = 0; t < 30; ++t) in.indicator[t] = (t / 6) % 2;
  in.energy = test::random_mat(30, 1, 23).cwiseAbs();
  in.beta = Vec::Zero(8);
  const MetricReport r = evaluate(in, model);
  for (const auto& k : report_keys()) CHECK(r.scalars.count(k) == 1);
  CHECK_FALSE(r.scalars.at("PSNR").has_value());
  const MeshMetrics m = mesh_metrics(in.pred, in.gt, in.beta, model);
  CHECK(*r.scalars.at("LVE") == doctest::Approx(1000 * m.lve));
  const io::Json j = r.to_json();
  CHECK(j.at("metrics").at("PSNR").is_null());
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("metric,value\n", 0) == 0);
  const auto dir = test::scratch("report");
  write_report(r, dir / "report.json");
  CHECK(std::filesystem::exists(dir / "report.csv"));
  write_line_plot(dir / "plot.png", {{Vec::LinSpaced(10, 0, 9), Vec::LinSpaced(10, 0, 1), {255, 0, 0}}});
  const io::Image img = io::read_png(dir / "plot.png");
  CHECK(img.width == 480);
}

TEST_CASE("external scorer output is parsed as JSON") {
  const auto dir = test::scratch("scorer");
  const io::Json j = run_external_scorer("echo '{\"LPIPS\": 0.25}' #", dir);
  CHECK(j.at("LPIPS").get<double>() == 0.25);
  CHECK_THROWS(run_external_scorer("echo not-json #", dir));
}

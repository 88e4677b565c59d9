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

#include "helpers.hpp"
#include "mango/core/errors.hpp"
#include "mango/dataio.hpp"
#include "mango/renderer.hpp"

using namespace mango;
using namespace mango::renderer;

namespace {

morphable::CameraPose small_camera(int size = 16, double focal = 40.0) {
  morphable::Intrinsics k;
  k.width = k.height = size;
  k.cx = k.cy = size / 2.0;
  k.focal = focal;
  return morphable::frontal_camera(0.5, k);
}

// World point that lands at camera depth z on the optical axis, shifted by (dx, dy) in camera space.
Eigen::Vector3d world_at(const morphable::CameraPose& cam, double dx, double dy, double z) {
  return cam.rotation().transpose() * (Eigen::Vector3d(dx, dy, z) - cam.extrinsic.topRightCorner<3, 1>());
}

GaussianSet five_gaussians(const morphable::CameraPose& cam) {
  Mat mu(5, 3), rot(5, 4), sc(5, 3), op(5, 1), app = test::random_mat(5, 4, 3);
  const double offs[5][3] = {{0, 0, 0.5}, {0.02, 0.01, 0.55}, {-0.03, 0.02, 0.6}, {0.01, -0.03, 0.45}, {-0.01, -0.01, 0.52}};
  const Mat qs = test::random_mat(5, 4, 4);
  for (int i = 0; i < 5; ++i) {
    mu.row(i) = world_at(cam, offs[i][0], offs[i][1], offs[i][2]).transpose();
    rot.row(i) = qs.row(i).normalized();
    sc.row(i) << std::log(0.012 + 0.002 * i), std::log(0.018), std::log(0.01);
    op(i, 0) = 0.5 + 0.08 * i;
  }
  return GaussianSet::from_values(mu, rot, sc, op, app);
}

}  // namespace

TEST_CASE("gaussian set validation") {
  const auto cam = small_camera();
  GaussianSet g = five_gaussians(cam);
  CHECK_NOTHROW(g.validate());
  Mat rot = g.rot.value();
  rot(0, 0) += 0.1;
  GaussianSet bad = GaussianSet::from_values(g.mu.value(), rot, g.scale.value(), g.opacity.value(), g.appearance.value());
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  Mat op = g.opacity.value();
  op(1, 0) = 1.5;
  bad = GaussianSet::from_values(g.mu.value(), g.rot.value(), g.scale.value(), op, g.appearance.value());
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("empty set renders zero image and zero alpha") {
  const auto cam = small_camera();
  const SplatResult r = splat(GaussianSet::empty(4), cam);
  CHECK(r.features.value().isZero());
  CHECK(r.alpha.value().isZero());
  CHECK(r.features.rows() == 256);
}

TEST_CASE("a gaussian on the optical axis peaks at the principal point") {
  morphable::Intrinsics k;  // 128 x 128, principal point (64, 64)
  const auto cam = morphable::frontal_camera(0.5, k);
  Mat mu = world_at(cam, 0, 0, 0.5).transpose();
  Mat rot(1, 4);
  rot << 1, 0, 0, 0;
  const GaussianSet g = GaussianSet::from_values(mu, rot, Mat::Constant(1, 3, std::log(0.01)), Mat::Ones(1, 1),
                                                 Mat::Ones(1, 4));
  const Mat f = splat(g, cam).features.value();
  Index best;
  f.col(0).maxCoeff(&best);
  CHECK(best % 128 == 64);
  CHECK(best / 128 == 64);
  CHECK(f(best, 0) == doctest::Approx(1.0));
}

TEST_CASE("an opaque front gaussian hides an identical one behind it") {
  const auto cam = small_camera();
  Mat mu(2, 3), rot(2, 4);
  mu.row(0) = world_at(cam, 0, 0, 0.4).transpose();
  mu.row(1) = world_at(cam, 0, 0, 0.6).transpose();
  rot << 1, 0, 0, 0, 1, 0, 0, 0;
  Mat app(2, 2);
  app << 1, 0, 0, 1;
  // Large scale so the front footprint saturates the centre pixel.
  const GaussianSet g = GaussianSet::from_values(mu, rot, Mat::Constant(2, 3, std::log(0.05)), Mat::Ones(2, 1), app);
  const Mat f = splat(g, cam).features.value();
  const Index centre = 8 * 16 + 8;
  CHECK(f(centre, 0) == doctest::Approx(1.0));
  CHECK(f(centre, 1) == 0.0);
}

TEST_CASE("alpha stays in [0, 1] and compositing weights never exceed one") {
  const auto cam = small_camera();
  GaussianSet g = five_gaussians(cam);
  Mat app = Mat::Ones(5, 4);
  g = GaussianSet::from_values(g.mu.value(), g.rot.value(), g.scale.value(), g.opacity.value(), app);
  const SplatResult r = splat(g, cam);
  CHECK(r.alpha.value().minCoeff() >= 0.0);
  CHECK(r.alpha.value().maxCoeff() <= 1.0);
  // with unit appearance the composited feature is the sum of weights
  CHECK(r.features.value().col(0).maxCoeff() <= 1.0 + 1e-12);
  CHECK((r.features.value().col(0) - r.alpha.value().col(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("splat gradient w.r.t. mu matches central differences") {
  const auto cam = small_camera();
  const GaussianSet g = five_gaussians(cam);
  const Mat w = test::random_mat(256, 4, 9);
  auto image_sum = [&](const Mat& mu) {
    GaussianSet h = GaussianSet::from_values(mu, g.rot.value(), g.scale.value(), g.opacity.value(), g.appearance.value());
    return splat(h, cam).features.value().cwiseProduct(w).sum();
  };
  GaussianSet p = g;
  p.mu = ag::Tensor::parameter(g.mu.value());
  ag::sum(ag::mul(splat(p, cam).features, ag::Tensor::constant(w))).backward();
  const Mat grad = p.mu.grad();
  int checked = 0;
  for (Index i = 0; i < 5; ++i)
    for (Index k = 0; k < 3; ++k) {
      const double num = test::central_diff(image_sum, g.mu.value(), i, k, 1e-6);
      CHECK(test::rel_err(num, grad(i, k)) < 1e-2);
      ++checked;
    }
  CHECK(checked == 15);
}

TEST_CASE("splat gradients w.r.t. rotation, scale, opacity and appearance") {
  const auto cam = small_camera();
  const GaussianSet g = five_gaussians(cam);
  const Mat w = test::random_mat(256, 5, 10);
  auto run = [&](const GaussianSet& h) {
    const SplatResult r = splat(h, cam);
    return ag::sum(ag::mul(ag::concat_cols({r.features, r.alpha}), ag::Tensor::constant(w)));
  };
  auto with = [&](int which, const Mat& m) {
    GaussianSet h = g;
    ag::Tensor* slots[4] = {&h.rot, &h.scale, &h.opacity, &h.appearance};
    *slots[which] = ag::Tensor::constant(m);
    return h;
  };
  const Mat* values[4] = {&g.rot.value(), &g.scale.value(), &g.opacity.value(), &g.appearance.value()};
  for (int which = 0; which < 4; ++which) {
    GaussianSet h = g;
    ag::Tensor* slots[4] = {&h.rot, &h.scale, &h.opacity, &h.appearance};
    *slots[which] = ag::Tensor::parameter(*values[which]);
    run(h).backward();
    const Mat grad = slots[which]->grad();
    auto f = [&](const Mat& m) { return run(with(which, m)).item(); };
    for (Index i = 0; i < grad.rows(); ++i)
      for (Index k = 0; k < grad.cols(); ++k) {
        // quaternions are used as given; perturbing one entry leaves the unit sphere,
        // so only the tangential part is comparable
        if (which == 0) continue;
        CHECK(test::rel_err(test::central_diff(f, *values[which], i, k, 1e-6), grad(i, k)) < 1e-2);
      }
  }
}

TEST_CASE("refiner with zero output layer squashes the coarse RGB") {
  const auto& m = dataio::desk_model();
  Stage2Model s2(Stage2Config{}, m);
  s2.zero_refiner_output();
  const Mat f = test::random_mat(64, kAppearanceDim, 5);
  const Mat out = s2.refine(ag::Tensor::constant(f), 8, 8).value();
  const Mat expect = (1.0 / (1.0 + (-f.leftCols(3).array()).exp())).matrix();
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(s2.refine(ag::Tensor::constant(f), 8, 7), ArgumentError);
}

TEST_CASE("reference encoding contract") {
  io::Image img;
  img.width = img.height = 256;
  img.pixels = Mat::Constant(256 * 256, 3, 0.3);
  const RefEncoding r = encode_reference(img, "desk");
  CHECK(r.feature_height == 32);
  CHECK(r.feature_width == 32);
  CHECK(r.feature_map.cols() == 64);
  // constant colour -> spatially constant features away from the zero-padded border
  double dev = 0.0;
  for (int y = 4; y < 28; ++y)
    for (int x = 4; x < 28; ++x) dev = std::max(dev, (r.feature_map.row(y * 32 + x) - r.feature_map.row(16 * 32 + 16)).cwiseAbs().maxCoeff());
  CHECK(dev < 1e-5);
  const RefEncoding again = encode_reference(img, "desk");
  CHECK(again.feature_map == r.feature_map);
  CHECK_THROWS_AS(encode_reference(img, "dinov2"), ConfigError);
  io::Image tiny;
  tiny.width = tiny.height = 32;
  tiny.pixels = Mat::Zero(32 * 32, 3);
  CHECK_THROWS_AS(encode_reference(tiny, "desk"), ArgumentError);
}

TEST_CASE("bilinear sampling at cell centres returns the cell and clamps at the border") {
  const Mat map = test::random_mat(12, 2, 6);  // 3 x 4
  Mat px(3, 2);
  px << 8 * 1 + 3.5, 8 * 2 + 3.5,  // centre of cell (x=1, y=2) at stride 8
      -100, -100,                   // clamps to (0, 0)
      8 * 1.5 + 3.5, 3.5;       // between x=1 and x=2 on row 0
  const Mat s = sample_bilinear(map, 3, 4, px, 8.0);
  CHECK((s.row(0) - map.row(2 * 4 + 1)).norm() < 1e-12);
  CHECK((s.row(1) - map.row(0)).norm() < 1e-12);
  CHECK((s.row(2) - 0.5 * (map.row(1) + map.row(2))).norm() < 1e-12);
}

TEST_CASE("mesh-attached gaussians") {
  const auto& m = dataio::desk_model();
  const auto cam = morphable::frontal_camera();
  const Vec beta = Vec::Zero(m.num_shape);
  const Mat ref_v = m.template_vertices;
  io::Image img;
  img.width = img.height = 128;
  img.pixels = Mat::Constant(128 * 128, 3, 0.5);
  const RefEncoding ref = encode_reference(img, "desk");
  Stage2Model s2(Stage2Config{}, m);

  const MeshGaussians g = s2.build(ref, ref_v, cam);
  CHECK(g.templ.size() == m.num_vertices);
  CHECK(g.uv.size() == static_cast<Index>(m.triangles.size()));
  CHECK(g.templ.opacity.value().minCoeff() >= 0.0);
  CHECK(g.templ.opacity.value().maxCoeff() <= 1.0);
  CHECK((g.templ.mu.value() - ref_v).cwiseAbs().maxCoeff() == 0.0);
  const double edge = mean_edge_length(m, ref_v);
  CHECK(g.uv_offset.value().rowwise().norm().maxCoeff() <= edge);

  SUBCASE("zero decoder puts uv gaussians at barycentres") {
    Stage2Model z = s2;
    z.zero_uv_decoder();
    const MeshGaussians gz = z.build(ref, ref_v, cam);
    const TriangleFrames fr = triangle_frames(m, ref_v);
    CHECK((gz.uv.mu.value() - fr.barycenters).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("animation at the reference pose is the identity") {
    const GaussianSet a = animate(g, m, ag::Tensor::constant(ref_v));
    const GaussianSet all = concat(g.templ, g.uv);
    CHECK((a.mu.value() - all.mu.value()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.rot.value() == all.rot.value());
    CHECK(a.scale.value() == all.scale.value());
    CHECK(a.opacity.value() == all.opacity.value());
    CHECK(a.appearance.value() == all.appearance.value());
  }
  SUBCASE("rigid translation moves every gaussian by the same vector") {
    const Eigen::RowVector3d t(0.01, -0.02, 0.005);
    Mat moved = ref_v;
    moved.rowwise() += t;
    const GaussianSet a = animate(g, m, ag::Tensor::constant(moved));
    const GaussianSet all = concat(g.templ, g.uv);
    Mat expect = all.mu.value();
    expect.rowwise() += t;
    CHECK((a.mu.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("other attributes are preserved bit-exactly under motion") {
    morphable::MotionFrame f = morphable::MotionFrame::zeros(m.num_expr);
    f.jaw = Eigen::Vector3d(0.2, 0, 0);
    f.psi(0) = 1.0;
    const Mat v = morphable::decode(m, beta, f);
    const GaussianSet a = animate(g, m, ag::Tensor::constant(v));
    const GaussianSet all = concat(g.templ, g.uv);
    CHECK(a.rot.value() == all.rot.value());
    CHECK(a.scale.value() == all.scale.value());
    CHECK(a.opacity.value() == all.opacity.value());
    CHECK(a.appearance.value() == all.appearance.value());
    CHECK((a.mu.value() - all.mu.value()).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("template mu jacobian is the identity; uv mu matches finite differences") {
    const Mat w = test::random_mat(m.num_vertices + static_cast<Index>(m.triangles.size()), 3, 8);
    const Mat v0 = ref_v + test::random_mat(m.num_vertices, 3, 9, 1e-3);
    ag::Tensor vt = ag::Tensor::parameter(v0);
    const GaussianSet a = animate(g, m, vt);
    ag::sum(ag::mul(a.mu, ag::Tensor::constant(w))).backward();
    const Mat grad = vt.grad();
    auto f = [&](const Mat& v) { return animate(g, m, ag::Tensor::constant(v)).mu.value().cwiseProduct(w).sum(); };
    for (Index i : {Index(0), Index(17), Index(300), Index(641)})
      for (Index k = 0; k < 3; ++k) CHECK(test::rel_err(test::central_diff(f, v0, i, k, 1e-7), grad(i, k)) < 1e-5);
    // template only: gradient equals the weight rows exactly
    ag::Tensor vt2 = ag::Tensor::parameter(v0);
    ag::sum(ag::mul(animate_template(g.templ, ref_v, vt2).mu, ag::Tensor::constant(w.topRows(m.num_vertices)))).backward();
    CHECK((vt2.grad() - w.topRows(m.num_vertices)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(animate(g, m, ag::Tensor::constant(ref_v.topRows(10))), ArgumentError);
}

TEST_CASE("rendering is deterministic and sensitive to motion") {
  const auto& m = dataio::desk_model();
  dataio::SynthOptions so;
  const dataio::DialogueClip clip = dataio::synth_clip(5, 20, m, so);
  Stage2Model s2(Stage2Config{}, m);
  const RefEncoding ref = encode_reference(clip.frames[0], "desk");
  const Mat posed = morphable::decode_sequence(m, clip.beta, clip.motion, false);
  auto verts = [&](Index t) { return Mat(Eigen::Map<const Mat>(posed.row(t).data(), m.num_vertices, 3)); };
  const MeshGaussians g = s2.build(ref, verts(0), clip.camera);
  const Mat a = s2.render(g, ag::Tensor::constant(verts(10)), clip.camera).value();
  const Mat b = s2.render(g, ag::Tensor::constant(verts(10)), clip.camera).value();
  const Mat c = s2.render(g, ag::Tensor::constant(verts(0)), clip.camera).value();
  CHECK(a == b);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() <= 1.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("stage-2 loss") {
  const DeskImageEncoder enc;
  const Mat gt = test::random_mat(64, 3, 1, 0.2).array().abs().min(1.0).matrix();
  const Stage2Loss z = stage2_loss(ag::Tensor::constant(gt), gt, 8, 8, enc);
  CHECK(z.total.item() == 0.0);
  const Stage2Weights w;
  CHECK(w.pho == 1.0);
  CHECK(w.per == 0.025);
  Mat pred = gt;
  pred(10, 1) = 1.0 - gt(10, 1);
  const Stage2Loss l = stage2_loss(ag::Tensor::constant(pred), gt, 8, 8, enc);
  CHECK(l.pho == doctest::Approx(std::abs(1.0 - 2 * gt(10, 1)) / (64 * 3)).epsilon(1e-12));
  CHECK(l.total.item() == doctest::Approx(l.pho + 0.025 * l.per).epsilon(1e-12));
  CHECK_THROWS_AS(stage2_loss(ag::Tensor::constant(pred.topRows(60)), gt, 8, 8, enc), ArgumentError);
}

TEST_CASE("stage-2 checkpoint round-trip is byte-identical") {
  const auto& m = dataio::desk_model();
  const auto dir = test::scratch("s2ckpt");
  Stage2Model s2(Stage2Config{}, m);
  s2.save(dir / "a");
  const Stage2Model l = Stage2Model::load(dir / "a", m);
  l.save(dir / "b");
  for (const auto& e : std::filesystem::directory_iterator(dir / "a"))
    CHECK(io::read_bytes(e.path()) == io::read_bytes(dir / "b" / e.path().filename()));
  const auto other = morphable::build_mini_model(7, 162);
  CHECK_THROWS_AS(Stage2Model::load(dir / "a", other), ConfigError);
}

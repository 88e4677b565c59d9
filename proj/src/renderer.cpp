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

#include "mango/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "mango/core/checkpoint.hpp"
#include "mango/core/errors.hpp"

namespace mango::renderer {

namespace {

std::map<std::string, ImageEncoderFactory>& encoder_registry() {
  static std::map<std::string, ImageEncoderFactory> registry = {
      {"desk", [] { return std::make_unique<DeskImageEncoder>(); }}};
  return registry;
}
std::mutex registry_mutex;

ag::Tensor frozen(const ag::Tensor& t) { return ag::Tensor::constant(t.value()); }

// Smoothly limits each row's length to `limit`: y = limit * tanh(|x| / limit) * x / |x|.
ag::Tensor radial_clamp(const ag::Tensor& x, double limit) {
  const Mat& xv = x.value();
  Mat y(xv.rows(), xv.cols());
  Vec gain(xv.rows()), slope(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double n = xv.row(i).norm();
    if (n < 1e-12) {
      gain(i) = 1.0;
      slope(i) = 0.0;
    } else {
      const double th = std::tanh(n / limit);
      gain(i) = limit * th / n;
      slope(i) = ((1.0 - th * th) - gain(i)) / (n * n);
    }
    y.row(i) = gain(i) * xv.row(i);
  }
  ag::NodePtr xn = x.node();
  return ag::make_op(std::move(y), {x}, [xn, gain, slope](const Mat& g, const std::vector<Mat*>& gi) {
    if (!gi[0]) return;
    const Mat& xv = xn->value;
    for (Index i = 0; i < xv.rows(); ++i) {
      gi[0]->row(i) += gain(i) * g.row(i) + (slope(i) * xv.row(i).dot(g.row(i))) * xv.row(i);
    }
  });
}

Mat finite_pixels(const morphable::Projection& p, const morphable::Intrinsics& k) {
  Mat px = p.pixels;
  for (Index i = 0; i < px.rows(); ++i) {
    if (!p.valid[static_cast<size_t>(i)] || !px.row(i).allFinite()) px.row(i) << k.cx, k.cy;
  }
  return px;
}

ag::Tensor quaternion_head(const ag::Tensor& raw) {
  RowVec id = RowVec::Zero(4);
  id(0) = 1.0;
  return ag::normalize_rows(ag::add_row(raw, ag::Tensor::constant(id)));
}

io::Json config_json(const Stage2Config& c) {
  return {{"encoder_id", c.encoder_id},       {"hidden", c.hidden},
          {"uv_hidden", c.uv_hidden},         {"uv_grid_width", c.uv_grid_width},
          {"refiner_width", c.refiner_width}, {"template_scale_factor", c.template_scale_factor},
          {"seed", c.seed}};
}

}  // namespace

void register_image_encoder(const std::string& id, ImageEncoderFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex);
  encoder_registry()[id] = std::move(factory);
}

std::unique_ptr<ImageEncoder> make_image_encoder(const std::string& id) {
  std::lock_guard<std::mutex> lock(registry_mutex);
  auto it = encoder_registry().find(id);
  if (it == encoder_registry().end()) throw ConfigError("unknown image encoder '" + id + "'");
  return it->second();
}

DeskImageEncoder::DeskImageEncoder(uint64_t seed) {
  nn::Rng rng(seed);
  c1_ = nn::Conv3x3(3, 16, rng);
  c2_ = nn::Conv3x3(16, 32, rng);
  c3_ = nn::Conv3x3(32, 64, rng);
  for (auto* c : {&c1_, &c2_, &c3_}) {
    c->weight = frozen(c->weight);
    c->bias = frozen(c->bias);
  }
}

std::vector<ag::Tensor> DeskImageEncoder::pyramid(const ag::Tensor& image, int height, int width) const {
  if (height % 8 || width % 8) throw ArgumentError("image encoder: size must be a multiple of 8");
  if (image.rows() != static_cast<Index>(height) * width || image.cols() != 3) {
    throw ArgumentError("image encoder: expected (H*W) x 3 pixels");
  }
  std::vector<ag::Tensor> levels;
  ag::Tensor x = ag::add_scalar(image, -0.5);
  x = ag::avg_pool2(ag::relu(c1_(x, height, width)), height, width);
  levels.push_back(x);
  x = ag::avg_pool2(ag::relu(c2_(x, height / 2, width / 2)), height / 2, width / 2);
  levels.push_back(x);
  x = ag::avg_pool2(ag::relu(c3_(x, height / 4, width / 4)), height / 4, width / 4);
  levels.push_back(x);
  return levels;
}

RefEncoding encode_reference(const io::Image& image, const std::string& encoder_id) {
  auto encoder = make_image_encoder(encoder_id);
  if (image.width < 64 || image.height < 64) throw ArgumentError("reference image must be at least 64x64");
  ag::NoGradGuard no_grad;
  auto levels = encoder->pyramid(ag::Tensor::constant(image.pixels), image.height, image.width);
  RefEncoding ref;
  ref.feature_map = levels.back().value();
  ref.feature_height = image.height / 8;
  ref.feature_width = image.width / 8;
  ref.identity = ref.feature_map.colwise().mean();
  return ref;
}

Mat sample_bilinear(const Mat& map, int height, int width, const Mat& pixels, double stride) {
  if (map.rows() != static_cast<Index>(height) * width) throw ArgumentError("sample_bilinear: map size mismatch");
  Mat out(pixels.rows(), map.cols());
  for (Index i = 0; i < pixels.rows(); ++i) {
    const double fx = std::clamp((pixels(i, 0) + 0.5) / stride - 0.5, 0.0, static_cast<double>(width - 1));
    const double fy = std::clamp((pixels(i, 1) + 0.5) / stride - 0.5, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double ax = fx - x0, ay = fy - y0;
    auto at = [&](int y, int x) { return map.row(static_cast<Index>(y) * width + x); };
    out.row(i) = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x1)) + ay * ((1 - ax) * at(y1, x0) + ax * at(y1, x1));
  }
  return out;
}

Stage2Model::Stage2Model(const Stage2Config& config, const morphable::MorphableModel& model) : config_(config) {
  init(model);
}

void Stage2Model::init(const morphable::MorphableModel& model) {
  model.validate();
  if (model.triangles.empty()) throw ArgumentError("stage-2 model needs a triangulated mesh");
  model_ = std::make_shared<const morphable::MorphableModel>(model);
  encoder_ = make_image_encoder(config_.encoder_id);
  const Index df = encoder_->feature_dim();
  nn::Rng rng(config_.seed);
  base_features_ = ag::Tensor::parameter(nn::randn(model.num_vertices, kBaseFeatureDim, rng, 0.1));
  const Index in = df + kBaseFeatureDim + df;
  dv1_ = nn::Linear(in, config_.hidden, rng);
  dv2_ = nn::Linear(config_.hidden, config_.hidden, rng);
  dv3_ = nn::Linear(config_.hidden, 8 + kAppearanceDim, rng);
  duv1_ = nn::Conv3x3(in, config_.uv_hidden, rng);
  duv2_ = nn::Conv3x3(config_.uv_hidden, config_.uv_hidden / 2, rng);
  duv3_ = nn::Conv3x3(config_.uv_hidden / 2, 11 + kAppearanceDim, rng);
  const Index r = config_.refiner_width;
  ref_in_ = nn::Conv3x3(kAppearanceDim, r, rng);
  ref_down1_ = nn::Conv3x3(r, r, rng);
  ref_down2_ = nn::Conv3x3(r, 2 * r, rng);
  ref_up1_ = nn::Conv3x3(3 * r, r, rng);
  ref_up2_ = nn::Conv3x3(2 * r, r, rng);
  ref_out_ = nn::Conv3x3(r, 3, rng);
  ref_out_.zero();

  // UV chart: triangles banded by latitude, each band ordered by longitude.
  const auto f = model.triangles.size();
  const TriangleFrames frames = triangle_frames(model, model.template_vertices);
  std::vector<double> lat(f), lon(f);
  for (size_t i = 0; i < f; ++i) {
    const RowVec b = frames.barycenters.row(static_cast<Index>(i));
    lat[i] = std::atan2(b(1), std::hypot(b(0), b(2)));
    lon[i] = std::atan2(b(0), b(2));
  }
  std::vector<Index> order(f);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return lat[a] > lat[b]; });
  const auto gw = static_cast<size_t>(config_.uv_grid_width);
  for (size_t s = 0; s < f; s += gw) {
    const auto e = std::min(f, s + gw);
    std::stable_sort(order.begin() + static_cast<long>(s), order.begin() + static_cast<long>(e),
                     [&](Index a, Index b) { return lon[a] < lon[b]; });
  }
  uv_rows_ = static_cast<Index>((f + gw - 1) / gw);
  uv_cells_.assign(f, 0);
  for (size_t k = 0; k < f; ++k) uv_cells_[static_cast<size_t>(order[k])] = static_cast<Index>(k);
}

nn::ParameterSet Stage2Model::parameters() const {
  nn::ParameterSet ps;
  ps.add("base_features", base_features_);
  dv1_.collect(ps, "dv.fc1");
  dv2_.collect(ps, "dv.fc2");
  dv3_.collect(ps, "dv.fc3");
  duv1_.collect(ps, "duv.conv1");
  duv2_.collect(ps, "duv.conv2");
  duv3_.collect(ps, "duv.conv3");
  ref_in_.collect(ps, "refiner.in");
  ref_down1_.collect(ps, "refiner.down1");
  ref_down2_.collect(ps, "refiner.down2");
  ref_up1_.collect(ps, "refiner.up1");
  ref_up2_.collect(ps, "refiner.up2");
  ref_out_.collect(ps, "refiner.out");
  return ps;
}

GaussianSet Stage2Model::build_template(const RefEncoding& ref, const Mat& ref_vertices,
                                        const CameraPose& camera) const {
  const auto& model = *model_;
  if (ref_vertices.rows() != model.num_vertices || ref_vertices.cols() != 3) {
    throw ArgumentError("build_template: vertex count mismatch");
  }
  const Index v = model.num_vertices;
  const double stride = static_cast<double>(camera.intrinsics.width) / ref.feature_width;
  const Mat px = finite_pixels(morphable::project(ref_vertices, camera), camera.intrinsics);
  const Mat fs = sample_bilinear(ref.feature_map, ref.feature_height, ref.feature_width, px, stride);
  const Mat fid = ref.identity.replicate(v, 1);
  ag::Tensor in = ag::concat_cols({ag::Tensor::constant(fs), base_features_, ag::Tensor::constant(fid)});
  ag::Tensor raw = dv3_(ag::relu(dv2_(ag::relu(dv1_(in)))));
  const double base_scale = std::log(config_.template_scale_factor * mean_edge_length(model, ref_vertices));
  GaussianSet g;
  g.mu = ag::Tensor::constant(ref_vertices);
  g.rot = quaternion_head(ag::slice_cols(raw, 0, 4));
  g.scale = ag::add_scalar(ag::slice_cols(raw, 4, 3), base_scale);
  g.opacity = ag::sigmoid(ag::add_scalar(ag::slice_cols(raw, 7, 1), 2.0));
  g.appearance = ag::slice_cols(raw, 8, kAppearanceDim);
  return g;
}

std::pair<GaussianSet, ag::Tensor> Stage2Model::build_uv(const RefEncoding& ref, const Mat& ref_vertices,
                                                         const CameraPose& camera) const {
  const auto& model = *model_;
  const auto f = static_cast<Index>(model.triangles.size());
  const TriangleFrames frames = triangle_frames(model, ref_vertices);
  const double stride = static_cast<double>(camera.intrinsics.width) / ref.feature_width;
  const Mat px = finite_pixels(morphable::project(frames.barycenters, camera), camera.intrinsics);
  const Mat fs = sample_bilinear(ref.feature_map, ref.feature_height, ref.feature_width, px, stride);
  Mat avg = Mat::Zero(f, model.num_vertices);
  for (Index i = 0; i < f; ++i)
    for (int k : model.triangles[static_cast<size_t>(i)]) avg(i, k) += 1.0 / 3.0;
  ag::Tensor fb = ag::matmul(ag::Tensor::constant(avg), base_features_);
  ag::Tensor feat = ag::concat_cols({ag::Tensor::constant(fs), fb, ag::Tensor::constant(ref.identity.replicate(f, 1))});

  // Scatter triangles into the chart grid; empty cells read an all-zero row.
  const Index gw = config_.uv_grid_width, cells = uv_rows_ * gw;
  std::vector<Index> cell_src(static_cast<size_t>(cells), f);
  for (Index i = 0; i < f; ++i) cell_src[static_cast<size_t>(uv_cells_[static_cast<size_t>(i)])] = i;
  ag::Tensor padded = ag::concat_rows({feat, ag::Tensor::constant(Mat::Zero(1, feat.cols()))});
  ag::Tensor grid = ag::gather_rows(padded, cell_src);
  const int gh = static_cast<int>(uv_rows_), gwi = static_cast<int>(gw);
  ag::Tensor h = ag::relu(duv1_(grid, gh, gwi));
  h = ag::relu(duv2_(h, gh, gwi));
  ag::Tensor raw = ag::gather_rows(duv3_(h, gh, gwi), uv_cells_);

  const double edge = mean_edge_length(model, ref_vertices);
  ag::Tensor offset = radial_clamp(ag::scale(ag::slice_cols(raw, 0, 3), 0.5 * edge), edge);
  GaussianSet g;
  g.mu = ag::add(ag::Tensor::constant(frames.barycenters), offset);
  g.rot = quaternion_head(ag::slice_cols(raw, 3, 4));
  g.scale = ag::add_scalar(ag::slice_cols(raw, 7, 3), std::log(config_.template_scale_factor * edge));
  g.opacity = ag::sigmoid(ag::add_scalar(ag::slice_cols(raw, 10, 1), -2.0));
  g.appearance = ag::slice_cols(raw, 11, kAppearanceDim);
  return {g, offset};
}

MeshGaussians Stage2Model::build(const RefEncoding& ref, const Mat& ref_vertices, const CameraPose& camera) const {
  MeshGaussians m;
  m.templ = build_template(ref, ref_vertices, camera);
  auto [uv, offset] = build_uv(ref, ref_vertices, camera);
  m.uv = uv;
  m.uv_offset = offset;
  m.ref_vertices = ref_vertices;
  m.ref_frames = triangle_frames(*model_, ref_vertices);
  return m;
}

ag::Tensor Stage2Model::refine(const ag::Tensor& features, int height, int width) const {
  if (features.cols() != kAppearanceDim || features.rows() != static_cast<Index>(height) * width) {
    throw ArgumentError("refine: expected (H*W) x " + std::to_string(kAppearanceDim) + " features");
  }
  if (height % 4 || width % 4) throw ArgumentError("refine: image size must be a multiple of 4");
  const int h2 = height / 2, w2 = width / 2, h4 = height / 4, w4 = width / 4;
  ag::Tensor e0 = ag::relu(ref_in_(features, height, width));
  ag::Tensor e1 = ag::relu(ref_down1_(ag::avg_pool2(e0, height, width), h2, w2));
  ag::Tensor e2 = ag::relu(ref_down2_(ag::avg_pool2(e1, h2, w2), h4, w4));
  ag::Tensor d1 = ag::relu(ref_up1_(ag::concat_cols({ag::upsample2(e2, h4, w4), e1}), h2, w2));
  ag::Tensor d0 = ag::relu(ref_up2_(ag::concat_cols({ag::upsample2(d1, h2, w2), e0}), height, width));
  ag::Tensor residual = ref_out_(d0, height, width);
  return ag::sigmoid(ag::add(ag::slice_cols(features, 0, 3), residual));
}

ag::Tensor Stage2Model::render(const MeshGaussians& gaussians, const ag::Tensor& vertices,
                               const CameraPose& camera) const {
  GaussianSet animated = animate(gaussians, *model_, vertices);
  SplatResult s = splat(animated, camera);
  return refine(s.features, camera.intrinsics.height, camera.intrinsics.width);
}

Stage2Loss Stage2Model::loss(const ag::Tensor& pred, const Mat& gt, int height, int width,
                             const Stage2Weights& weights) const {
  return stage2_loss(pred, gt, height, width, *encoder_, weights);
}

void Stage2Model::zero_uv_decoder() {
  duv1_.zero();
  duv2_.zero();
  duv3_.zero();
}

void Stage2Model::zero_refiner_output() { ref_out_.zero(); }

void Stage2Model::save(const std::filesystem::path& dir) const {
  io::Json manifest = config_json(config_);
  manifest["kind"] = "stage2";
  manifest["format"] = 1;
  manifest["num_vertices"] = model_->num_vertices;
  manifest["num_triangles"] = model_->triangles.size();
  ckpt::write(dir, manifest, parameters());
}

Stage2Model Stage2Model::load(const std::filesystem::path& dir, const morphable::MorphableModel& model) {
  const io::Json m = ckpt::read_manifest(dir);
  if (m.value("kind", std::string()) != "stage2") throw ConfigError(dir.string() + ": not a stage-2 checkpoint");
  Stage2Config c;
  try {
    c.encoder_id = m.at("encoder_id");
    c.hidden = m.at("hidden");
    c.uv_hidden = m.at("uv_hidden");
    c.uv_grid_width = m.at("uv_grid_width");
    c.refiner_width = m.at("refiner_width");
    c.template_scale_factor = m.at("template_scale_factor");
    c.seed = m.at("seed");
    if (m.at("num_vertices").get<Index>() != model.num_vertices ||
        m.at("num_triangles").get<size_t>() != model.triangles.size()) {
      throw ConfigError(dir.string() + ": checkpoint was trained for a different mesh");
    }
  } catch (const io::Json::exception& e) {
    throw ConfigError(dir.string() + ": " + e.what());
  }
  Stage2Model s(c, model);
  nn::ParameterSet ps = s.parameters();
  ckpt::load_weights(dir, m, ps);
  return s;
}

Stage2Loss stage2_loss(const ag::Tensor& pred, const Mat& gt, int height, int width, const ImageEncoder& encoder,
                       const Stage2Weights& weights) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || gt.rows() != static_cast<Index>(height) * width) {
    throw ArgumentError("stage2_loss: image dimensions differ");
  }
  ag::Tensor gt_t = ag::Tensor::constant(gt);
  ag::Tensor pho = ag::mean_abs_diff(pred, gt_t);
  std::vector<ag::Tensor> gt_levels;
  {
    ag::NoGradGuard no_grad;
    gt_levels = encoder.pyramid(gt_t, height, width);
  }
  std::vector<ag::Tensor> pred_levels = encoder.pyramid(pred, height, width);
  ag::Tensor per = ag::mse(pred_levels[0], ag::Tensor::constant(gt_levels[0].value()));
  for (size_t k = 1; k < pred_levels.size(); ++k) {
    per = ag::add(per, ag::mse(pred_levels[k], ag::Tensor::constant(gt_levels[k].value())));
  }
  per = ag::scale(per, 1.0 / static_cast<double>(pred_levels.size()));
  Stage2Loss out;
  out.pho = pho.item();
  out.per = per.item();
  out.total = ag::add(ag::scale(pho, weights.pho), ag::scale(per, weights.per));
  return out;
}

io::Image to_image(const Mat& pixels, int height, int width) {
  if (pixels.rows() != static_cast<Index>(height) * width || pixels.cols() != 3) {
    throw ArgumentError("to_image: expected (H*W) x 3 pixels");
  }
  io::Image img;
  img.width = width;
  img.height = height;
  img.pixels = pixels.cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

}  // namespace mango::renderer

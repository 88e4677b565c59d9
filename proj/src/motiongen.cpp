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

#include "mango/motiongen.hpp"

#include <algorithm>
#include <cmath>

#include "mango/core/checkpoint.hpp"
#include "mango/core/errors.hpp"

namespace mango::motiongen {

DiffusionSchedule::DiffusionSchedule(int steps, double offset) : steps_(steps), offset_(offset) {
  if (steps < 1) throw ArgumentError("diffusion schedule needs at least one step");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * M_PI / 2.0);
    return c * c;
  };
  betas_.resize(steps);
  alpha_bars_.resize(steps + 1);
  alpha_bars_(0) = 1.0;
  for (int n = 1; n <= steps; ++n) {
    const double b = std::clamp(1.0 - f(n) / f(n - 1), 1e-8, 0.999);
    betas_(n - 1) = b;
    alpha_bars_(n) = alpha_bars_(n - 1) * (1.0 - b);
  }
}

double DiffusionSchedule::beta(int n) const {
  if (n < 1 || n > steps_) throw ArgumentError("diffusion step " + std::to_string(n) + " out of range");
  return betas_(n - 1);
}

double DiffusionSchedule::alpha_bar(int n) const {
  if (n < 0 || n > steps_) throw ArgumentError("diffusion step " + std::to_string(n) + " out of range");
  return alpha_bars_(n);
}

Mat forward_diffuse(const Mat& x0, int n, const DiffusionSchedule& schedule, const Mat& noise) {
  if (n < 0 || n > schedule.steps()) throw ArgumentError("forward_diffuse: step out of range");
  if (noise.rows() != x0.rows() || noise.cols() != x0.cols()) throw ArgumentError("forward_diffuse: noise shape");
  const double ab = schedule.alpha_bar(n);
  if (ab == 1.0) return x0;
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

MotionWindow forward_diffuse(const MotionWindow& x0, int n, const DiffusionSchedule& schedule, nn::Rng& rng) {
  if (n < 1 || n > schedule.steps()) throw ArgumentError("forward_diffuse: step must lie in [1, N]");
  return MotionWindow{x0.prev, forward_diffuse(x0.curr, n, schedule, nn::randn(x0.curr.rows(), x0.curr.cols(), rng))};
}

BoolMat cross_attention_mask(Index tokens) {
  BoolMat m = BoolMat::Constant(tokens, tokens, false);
  for (Index i = 0; i < tokens; ++i) m(i, i) = true;
  return m;
}

Denoiser::Denoiser(const DenoiserConfig& c, nn::Rng& rng)
    : config_(c),
      in_proj_(c.motion_dim, c.model_dim, rng),
      cond_proj_(c.cond_dim, c.model_dim, rng),
      shape_proj_(c.shape_dim, c.model_dim, rng),
      step_fc1_(c.model_dim, c.model_dim, rng),
      step_fc2_(c.model_dim, c.model_dim, rng),
      out_proj_(c.model_dim, c.motion_dim, rng),
      out_norm_(c.model_dim) {
  for (Index l = 0; l < c.layers; ++l) {
    Layer layer;
    layer.ln_self = nn::LayerNorm(c.model_dim);
    layer.ln_cross = nn::LayerNorm(c.model_dim);
    layer.ln_ff = nn::LayerNorm(c.model_dim);
    layer.self_attn = nn::MultiHeadAttention(c.model_dim, c.heads, rng);
    layer.cross_attn = nn::MultiHeadAttention(c.model_dim, c.heads, rng);
    layer.ff = nn::FeedForward(c.model_dim, c.ff_hidden, rng);
    layers_.push_back(std::move(layer));
  }
}

ag::Tensor Denoiser::step_embedding(int step) const {
  ag::Tensor e = ag::Tensor::constant(nn::sinusoidal_embedding(static_cast<double>(step), config_.model_dim));
  return step_fc2_(ag::silu(step_fc1_(e)));
}

ag::Tensor Denoiser::forward(const ag::Tensor& cond, const Mat& prev, const ag::Tensor& noisy, int step,
                             const Vec& beta, std::vector<std::vector<Mat>>* cross_probs) const {
  const Index wp = prev.rows(), w = noisy.rows(), tokens = wp + w;
  const Index d = config_.model_dim;
  if (cond.rows() != tokens || cond.cols() != config_.cond_dim) {
    throw ArgumentError("denoise: conditioning must be (w_p + w) x " + std::to_string(config_.cond_dim));
  }
  if ((wp > 0 && prev.cols() != config_.motion_dim) || noisy.cols() != config_.motion_dim) {
    throw ArgumentError("denoise: motion width mismatch");
  }
  if (beta.size() != config_.shape_dim) throw ArgumentError("denoise: shape parameter length mismatch");

  ag::Tensor motion_in = wp > 0 ? ag::concat_rows({ag::Tensor::constant(prev), noisy}) : noisy;
  ag::Tensor step_e = step_embedding(step);
  ag::Tensor ones = ag::Tensor::constant(Mat::Ones(tokens + 1, 1));
  ag::Tensor pos = ag::Tensor::constant(nn::sinusoidal_table(tokens, d, -static_cast<double>(wp)));
  ag::Tensor motion_tok = ag::add(in_proj_(motion_in), pos);
  ag::Tensor shape_tok = shape_proj_(ag::Tensor::constant(beta.transpose()));
  ag::Tensor x = ag::add(ag::concat_rows({motion_tok, shape_tok}), ag::matmul(ones, step_e));
  ag::Tensor memory = ag::add(cond_proj_(cond), pos);
  const BoolMat mask = cross_attention_mask(tokens);
  ag::Tensor zero_row = ag::Tensor::constant(Mat::Zero(1, d));
  if (cross_probs) cross_probs->clear();
  for (const auto& layer : layers_) {
    ag::Tensor h = layer.ln_self(x);
    x = ag::add(x, layer.self_attn(h, h));
    // Only motion tokens cross-attend; the shape token skips this sublayer.
    ag::Tensor q = ag::slice_rows(layer.ln_cross(x), 0, tokens);
    std::vector<Mat> probs;
    ag::Tensor ctx = layer.cross_attn(q, memory, &mask, cross_probs ? &probs : nullptr);
    if (cross_probs) cross_probs->push_back(std::move(probs));
    x = ag::add(x, ag::concat_rows({ctx, zero_row}));
    x = ag::add(x, layer.ff(layer.ln_ff(x)));
  }
  return out_proj_(out_norm_(ag::slice_rows(x, 0, tokens)));
}

Mat Denoiser::cross_attention_context(int layer, const Mat& tokens, const Mat& cond) const {
  if (layer < 0 || layer >= static_cast<int>(layers_.size())) throw ArgumentError("layer index out of range");
  if (tokens.rows() != cond.rows()) throw ArgumentError("token/condition length mismatch");
  ag::NoGradGuard no_grad;
  const auto& l = layers_[static_cast<size_t>(layer)];
  const BoolMat mask = cross_attention_mask(tokens.rows());
  ag::Tensor memory = cond_proj_(ag::Tensor::constant(cond));
  return l.cross_attn(ag::Tensor::constant(tokens), memory, &mask).value();
}

void Denoiser::collect(nn::ParameterSet& ps, const std::string& prefix) const {
  in_proj_.collect(ps, prefix + ".in_proj");
  cond_proj_.collect(ps, prefix + ".cond_proj");
  shape_proj_.collect(ps, prefix + ".shape_proj");
  step_fc1_.collect(ps, prefix + ".step_fc1");
  step_fc2_.collect(ps, prefix + ".step_fc2");
  for (size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    const auto& l = layers_[i];
    l.ln_self.collect(ps, p + ".ln_self");
    l.ln_cross.collect(ps, p + ".ln_cross");
    l.ln_ff.collect(ps, p + ".ln_ff");
    l.self_attn.collect(ps, p + ".self_attn");
    l.cross_attn.collect(ps, p + ".cross_attn");
    l.ff.collect(ps, p + ".ff");
  }
  out_norm_.collect(ps, prefix + ".out_norm");
  out_proj_.collect(ps, prefix + ".out_proj");
}

namespace {

io::Json config_to_json(const Stage1Config& c) {
  return {{"dim",
           {{"input_dim", c.dim.input_dim},
            {"proj_dim", c.dim.proj_dim},
            {"heads", c.dim.heads},
            {"layers", c.dim.layers},
            {"ff_hidden", c.dim.ff_hidden}}},
          {"denoiser",
           {{"motion_dim", c.denoiser.motion_dim},
            {"cond_dim", c.denoiser.cond_dim},
            {"shape_dim", c.denoiser.shape_dim},
            {"model_dim", c.denoiser.model_dim},
            {"heads", c.denoiser.heads},
            {"layers", c.denoiser.layers},
            {"ff_hidden", c.denoiser.ff_hidden}}},
          {"window", {{"prev", c.window.prev}, {"curr", c.window.curr}}},
          {"schedule", {{"type", "cosine"}, {"steps", c.diffusion_steps}, {"offset", 0.008}}},
          {"seed", c.seed}};
}

Stage1Config config_from_json(const io::Json& j) {
  Stage1Config c;
  const auto& d = j.at("dim");
  c.dim = {d.at("input_dim"), d.at("proj_dim"), d.at("heads"), d.at("layers"), d.at("ff_hidden")};
  const auto& n = j.at("denoiser");
  c.denoiser = {n.at("motion_dim"), n.at("cond_dim"), n.at("shape_dim"), n.at("model_dim"),
                n.at("heads"),      n.at("layers"),   n.at("ff_hidden")};
  c.window = {j.at("window").at("prev"), j.at("window").at("curr")};
  if (j.at("schedule").at("type").get<std::string>() != "cosine") throw ConfigError("unsupported schedule type");
  c.diffusion_steps = j.at("schedule").at("steps");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

Stage1Model::Stage1Model(const Stage1Config& config) : config_(config), schedule_(config.diffusion_steps) {
  if (config.denoiser.cond_dim != 2 * config.dim.proj_dim + 1) {
    throw ConfigError("denoiser conditioning width must equal the fused audio width");
  }
  if (config.window.curr < 1 || config.window.prev < 0) throw ConfigError("invalid window sizes");
  nn::Rng rng(config.seed);
  dim_ = audio::DualAudioInteraction(config.dim, rng);
  denoiser_ = Denoiser(config.denoiser, rng);
}

nn::ParameterSet Stage1Model::parameters() const {
  nn::ParameterSet ps;
  dim_.collect(ps, "dim");
  denoiser_.collect(ps, "denoiser");
  return ps;
}

ag::Tensor Stage1Model::fuse(const Mat& h_self, const Mat& h_other, const std::vector<uint8_t>& indicator) const {
  return dim_.forward(ag::Tensor::constant(h_self), ag::Tensor::constant(h_other), indicator);
}

void Stage1Model::save(const std::filesystem::path& dir) const {
  io::Json manifest = config_to_json(config_);
  manifest["kind"] = "stage1";
  manifest["format"] = 1;
  ckpt::write(dir, manifest, parameters());
}

Stage1Model Stage1Model::load(const std::filesystem::path& dir) {
  const io::Json manifest = ckpt::read_manifest(dir);
  if (manifest.value("kind", std::string()) != "stage1") {
    throw ConfigError(dir.string() + ": not a stage-1 checkpoint");
  }
  Stage1Config config;
  try {
    config = config_from_json(manifest);
  } catch (const io::Json::exception& e) {
    throw ConfigError(dir.string() + ": " + e.what());
  }
  Stage1Model model(config);
  nn::ParameterSet ps = model.parameters();
  ckpt::load_weights(dir, manifest, ps);
  return model;
}

Mat denoise(const audio::FeatureSequence& fused, const Mat& prev, const Mat& noisy, int step, const Vec& beta,
            const Denoiser& params) {
  ag::NoGradGuard no_grad;
  return params.forward(ag::Tensor::constant(fused.features), prev, ag::Tensor::constant(noisy), step, beta).value();
}

std::vector<int> sampling_steps(const DiffusionSchedule& schedule, int stride_steps) {
  const int n = schedule.steps();
  std::vector<int> steps;
  if (stride_steps <= 0 || stride_steps >= n) {
    for (int s = n; s >= 1; --s) steps.push_back(s);
    return steps;
  }
  for (int k = stride_steps - 1; k >= 0; --k) {
    const int s = 1 + static_cast<int>(std::lround(static_cast<double>(n - 1) * k / std::max(1, stride_steps - 1)));
    if (steps.empty() || steps.back() != s) steps.push_back(s);
  }
  return steps;
}

Mat sample_window(const DenoiseFn& denoise_fn, Index frames, Index dim, const DiffusionSchedule& schedule,
                  nn::Rng& rng, int stride_steps, Index prev_frames) {
  const std::vector<int> steps = sampling_steps(schedule, stride_steps);
  Mat x = nn::randn(frames, dim, rng);
  for (size_t i = 0; i < steps.size(); ++i) {
    const int n = steps[i];
    const int n_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    Mat x0 = denoise_fn(x, n);
    if (x0.rows() == frames + prev_frames) x0 = x0.bottomRows(frames).eval();
    if (x0.rows() != frames || x0.cols() != dim) throw ArgumentError("sample_window: denoiser output shape mismatch");
    const double ab = schedule.alpha_bar(n), ab_prev = schedule.alpha_bar(n_prev);
    const double beta = 1.0 - ab / ab_prev;
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    x = c0 * x0 + ct * x;
    if (n_prev > 0) {
      const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
      x += std::sqrt(var) * nn::randn(frames, dim, rng);
    }
  }
  return x;
}

ClipFeatures encode_clip(const audio::AudioTrack& self, const audio::AudioTrack& other,
                         const audio::IndicatorTrack& indicator, const std::string& encoder_id) {
  const Index t = static_cast<Index>(indicator.size());
  if (t == 0) throw ArgumentError("encode_clip: zero frames");
  indicator.validate();
  ClipFeatures f;
  f.h_self = audio::encode(self, encoder_id, t).features;
  f.h_other = audio::encode(other, encoder_id, t).features;
  f.indicator = indicator.bits;
  return f;
}

WindowInputs slice_window(const ClipFeatures& clip, Index start, const WindowConfig& window) {
  const Index tokens = window.prev + window.curr, t_len = clip.frames();
  WindowInputs w;
  w.h_self = Mat::Zero(tokens, clip.h_self.cols());
  w.h_other = Mat::Zero(tokens, clip.h_other.cols());
  w.indicator.assign(static_cast<size_t>(tokens), 0);
  for (Index i = 0; i < tokens; ++i) {
    const Index src = start - window.prev + i;
    if (src < 0 || src >= t_len) continue;
    w.h_self.row(i) = clip.h_self.row(src);
    w.h_other.row(i) = clip.h_other.row(src);
    w.indicator[static_cast<size_t>(i)] = clip.indicator[static_cast<size_t>(src)];
  }
  return w;
}

morphable::MotionSequence generate(const ClipFeatures& clip, const Vec& beta, const Stage1Model& model,
                                   const GenerateOptions& options) {
  const Index t_len = clip.frames();
  if (t_len == 0) throw ArgumentError("generate: clip has zero frames");
  if (clip.h_other.rows() != t_len || static_cast<Index>(clip.indicator.size()) != t_len) {
    throw ArgumentError("generate: audio/indicator frame counts differ");
  }
  const auto& win = model.config().window;
  const Index d = model.config().denoiser.motion_dim;
  ag::NoGradGuard no_grad;
  nn::Rng rng(options.seed);
  morphable::MotionSequence out = Mat::Zero(t_len, d);
  for (Index start = 0; start < t_len; start += win.curr) {
    WindowInputs in = slice_window(clip, start, win);
    ag::Tensor cond = model.fuse(in.h_self, in.h_other, in.indicator);
    Mat prev = Mat::Zero(win.prev, d);
    for (Index i = 0; i < win.prev; ++i) {
      const Index src = start - win.prev + i;
      if (src >= 0) prev.row(i) = out.row(src);
    }
    auto fn = [&](const Mat& noisy, int n) {
      return model.denoiser().forward(cond, prev, ag::Tensor::constant(noisy), n, beta).value();
    };
    Mat curr = sample_window(fn, win.curr, d, model.schedule(), rng, options.stride_steps, win.prev);
    const Index keep = std::min(win.curr, t_len - start);
    out.middleRows(start, keep) = curr.topRows(keep);
  }
  return out;
}

Stage1Loss stage1_loss(const ag::Tensor& pred, const Mat& gt, const Vec& beta, const morphable::MorphableModel& model,
                       const Stage1Weights& weights) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw ArgumentError("stage1_loss: shape mismatch");
  if (gt.cols() != model.motion_dim()) throw ArgumentError("stage1_loss: motion width does not match the model");
  ag::Tensor gt_t = ag::Tensor::constant(gt);
  ag::Tensor l_param = ag::mse(pred, gt_t);
  ag::Tensor l_jaw = ag::mse(ag::slice_cols(pred, model.jaw_offset(), morphable::kJawDims),
                             ag::Tensor::constant(gt.middleCols(model.jaw_offset(), morphable::kJawDims)));
  ag::Tensor v_pred = morphable::decode_tensor(model, beta, pred, true);
  ag::Tensor v_gt = ag::Tensor::constant(morphable::decode_zero_pose(model, beta, gt));
  ag::Tensor l_vert = ag::mse(v_pred, v_gt);
  ag::Tensor vel_pred = ag::diff_rows(v_pred);
  ag::Tensor l_vel = ag::mse(vel_pred, ag::diff_rows(v_gt));
  ag::Tensor l_smooth = ag::mean(ag::square(ag::diff_rows(vel_pred)));
  Stage1Loss out;
  out.param = l_param.item();
  out.jaw = l_jaw.item();
  out.vert = l_vert.item();
  out.vel = l_vel.item();
  out.smooth = l_smooth.item();
  out.total = ag::add(ag::add(ag::add(l_param, ag::scale(l_jaw, weights.jaw)), ag::scale(l_vert, weights.vert)),
                      ag::add(ag::scale(l_vel, weights.vel), ag::scale(l_smooth, weights.smooth)));
  return out;
}

}  // namespace mango::motiongen

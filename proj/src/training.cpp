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

#include "mango/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mango/core/errors.hpp"

namespace mango::training {

namespace {

using motiongen::Stage1Model;
using renderer::Stage2Model;

// Ground-truth motion rows [start - prev, start + curr), zero outside the clip.
Mat window_motion(const Mat& motion, Index start, const motiongen::WindowConfig& w) {
  Mat out = Mat::Zero(w.prev + w.curr, motion.cols());
  for (Index i = 0; i < out.rows(); ++i) {
    const Index src = start - w.prev + i;
    if (src >= 0 && src < motion.rows()) out.row(i) = motion.row(src);
  }
  return out;
}

// Half the draws use inference-aligned starts (multiples of the window) so padded tails are seen.
Index sample_start(Index frames, const motiongen::WindowConfig& w, nn::Rng& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  if (coin(rng)) {
    const Index windows = (frames + w.curr - 1) / w.curr;
    std::uniform_int_distribution<Index> k(0, windows - 1);
    return k(rng) * w.curr;
  }
  std::uniform_int_distribution<Index> s(0, std::max<Index>(0, frames - w.curr));
  return s(rng);
}

std::vector<Index> sample_without_replacement(std::vector<Index> pool, Index n, nn::Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<size_t>(std::min<Index>(n, static_cast<Index>(pool.size()))));
  std::sort(pool.begin(), pool.end());
  return pool;
}

double lr_at(const std::string& schedule, double base, int it, int total, int warmup) {
  return nn::scheduled_lr(nn::parse_schedule(schedule), base, it, total, warmup);
}

const io::Image* frame_ptr(const PreparedClip& c, Index t) { return &c.clip->frames[static_cast<size_t>(t)]; }

void require_frames(const std::vector<PreparedClip>& clips) {
  for (const auto& c : clips) {
    if (!c.clip->has_frames()) throw ConfigError("clip " + c.clip->clip_id + " has no frames for stage-2 training");
  }
}

}  // namespace

Phase parse_phase(const std::string& id) {
  if (id == "pretrain1") return Phase::kPretrain1;
  if (id == "pretrain2") return Phase::kPretrain2;
  if (id == "joint") return Phase::kJoint;
  throw ConfigError("unknown training phase '" + id + "'");
}

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kPretrain1:
      return "pretrain1";
    case Phase::kPretrain2:
      return "pretrain2";
    case Phase::kJoint:
      return "joint";
  }
  return "";
}

void TrainConfig::validate(const motiongen::WindowConfig& window) const {
  if (stage1_iterations < 0 || stage2_iterations < 0 || joint_iterations < 0) {
    throw ConfigError("iteration counts must be non-negative");
  }
  if (batch_stage1 < 1 || batch_stage2 < 1 || batch_joint < 1) throw ConfigError("batch sizes must be positive");
  if (!(lr_stage1 > 0) || !(lr_stage2 > 0)) throw ConfigError("learning rates must be positive");
  if (n_render_frames < 1 || n_render_frames > window.curr) {
    throw ConfigError("n_render_frames must lie in [1, window]");
  }
  if (joint_chain_steps < 1) throw ConfigError("joint_chain_steps must be positive");
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (!(indicator_noise >= 0.0 && indicator_noise <= 1.0)) throw ConfigError("indicator_noise must lie in [0, 1]");
  nn::parse_schedule(schedule_stage1);
  nn::parse_schedule(schedule_stage2);
}

io::Json TrainConfig::to_json() const {
  return {{"phase", phase_name(phase)},
          {"stage1_iterations", stage1_iterations},
          {"stage2_iterations", stage2_iterations},
          {"joint_iterations", joint_iterations},
          {"batch_stage1", batch_stage1},
          {"batch_stage2", batch_stage2},
          {"batch_joint", batch_joint},
          {"lr_stage1", lr_stage1},
          {"lr_stage2", lr_stage2},
          {"schedule_stage1", schedule_stage1},
          {"schedule_stage2", schedule_stage2},
          {"warmup", warmup},
          {"clip_norm", clip_norm},
          {"seed", seed},
          {"n_render_frames", n_render_frames},
          {"joint_chain_steps", joint_chain_steps},
          {"indicator_noise", indicator_noise},
          {"stage1_weights",
           {{"jaw", stage1_weights.jaw},
            {"vert", stage1_weights.vert},
            {"vel", stage1_weights.vel},
            {"smooth", stage1_weights.smooth}}},
          {"stage2_weights", {{"pho", stage2_weights.pho}, {"per", stage2_weights.per}}},
          {"audio_encoder", audio_encoder},
          {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const io::Json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  const io::Json known = c.to_json();
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown training config key '" + k + "'");
  }
  try {
    if (j.contains("phase")) c.phase = parse_phase(j.at("phase"));
    auto get = [&](const char* k, auto& v) {
      if (j.contains(k)) v = j.at(k).get<std::decay_t<decltype(v)>>();
    };
    get("stage1_iterations", c.stage1_iterations);
    get("stage2_iterations", c.stage2_iterations);
    get("joint_iterations", c.joint_iterations);
    get("batch_stage1", c.batch_stage1);
    get("batch_stage2", c.batch_stage2);
    get("batch_joint", c.batch_joint);
    get("lr_stage1", c.lr_stage1);
    get("lr_stage2", c.lr_stage2);
    get("schedule_stage1", c.schedule_stage1);
    get("schedule_stage2", c.schedule_stage2);
    get("warmup", c.warmup);
    get("clip_norm", c.clip_norm);
    get("seed", c.seed);
    get("n_render_frames", c.n_render_frames);
    get("joint_chain_steps", c.joint_chain_steps);
    get("indicator_noise", c.indicator_noise);
    get("audio_encoder", c.audio_encoder);
    get("log_every", c.log_every);
    if (j.contains("stage1_weights")) {
      const auto& w = j.at("stage1_weights");
      c.stage1_weights.jaw = w.value("jaw", c.stage1_weights.jaw);
      c.stage1_weights.vert = w.value("vert", c.stage1_weights.vert);
      c.stage1_weights.vel = w.value("vel", c.stage1_weights.vel);
      c.stage1_weights.smooth = w.value("smooth", c.stage1_weights.smooth);
    }
    if (j.contains("stage2_weights")) {
      const auto& w = j.at("stage2_weights");
      c.stage2_weights.pho = w.value("pho", c.stage2_weights.pho);
      c.stage2_weights.per = w.value("per", c.stage2_weights.per);
    }
  } catch (const io::Json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::from_json(const io::Json& j) { return from_json(j, TrainConfig()); }

void TrainLog::write(const io::Json& record) {
  records_.push_back(record);
  if (sink_) {
    *sink_ << record.dump() << '\n';
    sink_->flush();
  }
}

std::vector<PreparedClip> prepare(const std::vector<dataio::DialogueClip>& clips,
                                  const morphable::MorphableModel& model, const std::string& audio_encoder,
                                  const std::string& image_encoder, bool need_frames) {
  if (clips.empty()) throw ConfigError("training needs at least one clip");
  std::vector<PreparedClip> out;
  for (const auto& c : clips) {
    PreparedClip p;
    p.clip = &c;
    p.features = motiongen::encode_clip(c.audio_self, c.audio_other, c.indicator, audio_encoder);
    p.posed = morphable::decode_sequence(model, c.beta, c.motion, false);
    if (need_frames) {
      if (!c.has_frames()) throw ConfigError("clip " + c.clip_id + " has no frames for stage-2 training");
      p.reference = renderer::encode_reference(c.frames[static_cast<size_t>(p.ref_frame)], image_encoder);
    }
    out.push_back(std::move(p));
  }
  return out;
}

motiongen::Stage1Loss window_loss(const Stage1Model& model, const PreparedClip& clip,
                                  const morphable::MorphableModel& morph, Index start, int step, const Mat& noise,
                                  const motiongen::Stage1Weights& weights, double flip_alpha,
                                  uint64_t flip_seed) {
  const auto& w = model.config().window;
  motiongen::WindowInputs in = motiongen::slice_window(clip.features, start, w);
  if (flip_alpha > 0.0) in.indicator = dataio::perturb_indicator({in.indicator}, flip_alpha, flip_seed).bits;
  ag::Tensor cond = model.fuse(in.h_self, in.h_other, in.indicator);
  const Mat gt = window_motion(clip.clip->motion, start, w);
  const Mat prev = gt.topRows(w.prev);
  const Mat noisy = motiongen::forward_diffuse(Mat(gt.bottomRows(w.curr)), step, model.schedule(), noise);
  ag::Tensor pred = model.denoiser().forward(cond, prev, ag::Tensor::constant(noisy), step, clip.clip->beta);
  return motiongen::stage1_loss(pred, gt, clip.clip->beta, morph, weights);
}

renderer::Stage2Loss render_loss(const Stage2Model& model, const renderer::MeshGaussians& gaussians,
                                 const ag::Tensor& posed_rows, const std::vector<const io::Image*>& gt,
                                 const morphable::CameraPose& camera, const renderer::Stage2Weights& weights) {
  if (static_cast<size_t>(posed_rows.rows()) != gt.size() || gt.empty()) {
    throw ArgumentError("render_loss: one ground-truth image per vertex row required");
  }
  const int h = camera.intrinsics.height, w = camera.intrinsics.width;
  const Index v = posed_rows.cols() / 3;
  renderer::Stage2Loss total;
  const double inv = 1.0 / static_cast<double>(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i]->height != h || gt[i]->width != w) throw ArgumentError("render_loss: frame size differs from camera");
    ag::Tensor verts = ag::reshape(ag::slice_rows(posed_rows, static_cast<Index>(i), 1), v, 3);
    ag::Tensor img = model.render(gaussians, verts, camera);
    renderer::Stage2Loss l = model.loss(img, gt[i]->pixels, h, w, weights);
    total.pho += inv * l.pho;
    total.per += inv * l.per;
    ag::Tensor part = ag::scale(l.total, inv);
    total.total = total.total.defined() ? ag::add(total.total, part) : part;
  }
  return total;
}

void copy_parameters(const nn::ParameterSet& src, nn::ParameterSet& dst) {
  if (src.size() != dst.size()) throw ConfigError("parameter sets differ in size");
  for (size_t i = 0; i < src.size(); ++i) {
    const auto& [sn, st] = src.items()[i];
    auto& [dn, dt] = dst.items()[i];
    if (sn != dn || st.rows() != dt.rows() || st.cols() != dt.cols()) {
      throw ConfigError("parameter mismatch at " + sn);
    }
    dt.mutable_value() = st.value();
  }
}

LossCurve pretrain_stage1(Stage1Model& model, const std::vector<dataio::DialogueClip>& clips,
                          const morphable::MorphableModel& morph, const TrainConfig& config, TrainLog* log) {
  config.validate(model.config().window);
  for (const auto& c : clips) c.validate();
  const std::vector<PreparedClip> data = prepare(clips, morph, config.audio_encoder, "desk", false);
  nn::ParameterSet params = model.parameters();
  nn::Adam adam;
  nn::Rng rng(config.seed);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> step_dist(1, model.schedule().steps());
  LossCurve curve;
  const auto& w = model.config().window;
  const double inv = 1.0 / config.batch_stage1;
  for (int it = 0; it < config.stage1_iterations; ++it) {
    params.zero_grad();
    double total = 0.0, param = 0.0;
    for (int b = 0; b < config.batch_stage1; ++b) {
      const PreparedClip& clip = data[pick(rng)];
      const Index start = sample_start(clip.clip->frame_count(), w, rng);
      const int n = step_dist(rng);
      const Mat noise = nn::randn(w.curr, morph.motion_dim(), rng);
      double flip_alpha = 0.0;
      uint64_t flip_seed = 0;
      if (config.indicator_noise > 0.0) {
        flip_alpha = std::uniform_real_distribution<double>(0.0, config.indicator_noise)(rng);
        flip_seed = rng();
      }
      motiongen::Stage1Loss l =
          window_loss(model, clip, morph, start, n, noise, config.stage1_weights, flip_alpha, flip_seed);
      ag::scale(l.total, inv).backward();
      total += inv * l.total.item();
      param += inv * l.param;
    }
    params.clip_grad_norm(config.clip_norm);
    const double lr = lr_at(config.schedule_stage1, config.lr_stage1, it, config.stage1_iterations, config.warmup);
    adam.step(params, lr);
    curve.total.push_back(total);
    curve.param.push_back(param);
    if (log && it % config.log_every == 0) {
      log->write({{"iter", it}, {"phase", "pretrain1"}, {"lr", lr}, {"losses", {{"total", total}, {"param", param}}}});
    }
  }
  params.zero_grad();
  return curve;
}

LossCurve pretrain_stage2(Stage2Model& model, const std::vector<dataio::DialogueClip>& clips,
                          const morphable::MorphableModel& morph, const TrainConfig& config, TrainLog* log) {
  for (const auto& c : clips) {
    c.validate();
    if (!c.has_frames()) throw ConfigError("clip " + c.clip_id + " has no frames for stage-2 training");
  }
  const std::vector<PreparedClip> data = prepare(clips, morph, config.audio_encoder, model.config().encoder_id, true);
  require_frames(data);
  nn::ParameterSet params = model.parameters();
  nn::Adam adam;
  nn::Rng rng(config.seed);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  LossCurve curve;
  for (int it = 0; it < config.stage2_iterations; ++it) {
    params.zero_grad();
    const PreparedClip& clip = data[pick(rng)];
    const Mat ref = Eigen::Map<const Mat>(clip.posed.row(clip.ref_frame).data(), morph.num_vertices, 3);
    renderer::MeshGaussians g = model.build(clip.reference, ref, clip.clip->camera);
    std::vector<Index> pool(static_cast<size_t>(clip.clip->frame_count()));
    std::iota(pool.begin(), pool.end(), 0);
    const std::vector<Index> frames = sample_without_replacement(pool, config.batch_stage2, rng);
    Mat rows(static_cast<Index>(frames.size()), clip.posed.cols());
    std::vector<const io::Image*> gt;
    for (size_t i = 0; i < frames.size(); ++i) {
      rows.row(static_cast<Index>(i)) = clip.posed.row(frames[i]);
      gt.push_back(frame_ptr(clip, frames[i]));
    }
    renderer::Stage2Loss l =
        render_loss(model, g, ag::Tensor::constant(rows), gt, clip.clip->camera, config.stage2_weights);
    l.total.backward();
    params.clip_grad_norm(config.clip_norm);
    const double lr = lr_at(config.schedule_stage2, config.lr_stage2, it, config.stage2_iterations, config.warmup);
    adam.step(params, lr);
    curve.total.push_back(l.total.item());
    curve.pho.push_back(l.pho);
    if (log && it % config.log_every == 0) {
      log->write({{"iter", it},
                  {"phase", "pretrain2"},
                  {"lr", lr},
                  {"losses", {{"total", l.total.item()}, {"pho", l.pho}, {"per", l.per}}}});
    }
  }
  params.zero_grad();
  return curve;
}

JointReport joint_train(Stage1Model& stage1, Stage2Model& stage2, const std::vector<dataio::DialogueClip>& clips,
                        const morphable::MorphableModel& morph, const TrainConfig& config, TrainLog* log) {
  const auto& w = stage1.config().window;
  config.validate(w);
  if (stage1.config().denoiser.motion_dim != morph.motion_dim()) {
    throw ConfigError("stage-1 checkpoint motion width does not match the morphable model");
  }
  for (const auto& c : clips) c.validate();
  const std::vector<PreparedClip> data =
      prepare(clips, morph, config.audio_encoder, stage2.config().encoder_id, true);
  require_frames(data);
  nn::ParameterSet p1 = stage1.parameters(), p2 = stage2.parameters();
  nn::Adam adam1, adam2;
  nn::Rng rng(config.seed);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> step_dist(1, stage1.schedule().steps());
  const auto& sched = stage1.schedule();
  const std::vector<int> chain = motiongen::sampling_steps(sched, config.joint_chain_steps);
  const Index d = morph.motion_dim();
  const double inv = 1.0 / config.batch_joint;
  JointReport report;

  for (int it = 0; it < config.joint_iterations; ++it) {
    // (a) stage-1 step on L_stage1 + L_stage2, stage-2 weights frozen.
    const uint64_t h2_before = p2.hash();
    p1.zero_grad();
    double total1 = 0.0, param1 = 0.0, pho1 = 0.0;
    for (int b = 0; b < config.batch_joint; ++b) {
      const PreparedClip& clip = data[pick(rng)];
      const Index frames = clip.clip->frame_count();
      const Index start = sample_start(frames, w, rng);
      const Mat noise = nn::randn(w.curr, d, rng);
      motiongen::Stage1Loss l1 = window_loss(stage1, clip, morph, start, step_dist(rng), noise, config.stage1_weights);

      const motiongen::WindowInputs in = motiongen::slice_window(clip.features, start, w);
      ag::Tensor cond = stage1.fuse(in.h_self, in.h_other, in.indicator);
      const Mat gt = window_motion(clip.clip->motion, start, w);
      const Mat prev = gt.topRows(w.prev);
      Mat x = nn::randn(w.curr, d, rng);
      ag::Tensor x0;
      for (size_t k = 0; k < chain.size(); ++k) {
        const int n = chain[k];
        const bool last = k + 1 == chain.size();
        if (last) {
          x0 = stage1.denoiser().forward(cond, prev, ag::Tensor::constant(x), n, clip.clip->beta);
          break;
        }
        Mat x0v;
        {
          ag::NoGradGuard ng;
          x0v = stage1.denoiser().forward(cond.detach(), prev, ag::Tensor::constant(x), n, clip.clip->beta).value();
        }
        const int n_prev = chain[k + 1];
        const double ab = sched.alpha_bar(n), abp = sched.alpha_bar(n_prev);
        const double beta = 1.0 - ab / abp;
        x = std::sqrt(abp) * beta / (1.0 - ab) * x0v.bottomRows(w.curr) +
            std::sqrt(1.0 - beta) * (1.0 - abp) / (1.0 - ab) * x;
        x += std::sqrt(beta * (1.0 - abp) / (1.0 - ab)) * nn::randn(w.curr, d, rng);
      }
      ag::Tensor curr = ag::slice_rows(x0, w.prev, w.curr);
      std::vector<Index> pool;
      for (Index i = 0; i < w.curr; ++i)
        if (start + i < frames) pool.push_back(i);
      const std::vector<Index> pick_rows = sample_without_replacement(pool, config.n_render_frames, rng);
      ag::Tensor rows = ag::gather_rows(curr, pick_rows);
      ag::Tensor posed = morphable::decode_tensor(morph, clip.clip->beta, rows, false);
      renderer::MeshGaussians g;
      {
        ag::NoGradGuard ng;
        const Mat ref = Eigen::Map<const Mat>(clip.posed.row(clip.ref_frame).data(), morph.num_vertices, 3);
        g = stage2.build(clip.reference, ref, clip.clip->camera);
      }
      std::vector<const io::Image*> gt_img;
      for (Index r : pick_rows) gt_img.push_back(frame_ptr(clip, start + r));
      renderer::Stage2Loss l2 = render_loss(stage2, g, posed, gt_img, clip.clip->camera, config.stage2_weights);
      ag::Tensor lj = ag::add(l1.total, l2.total);
      ag::scale(lj, inv).backward();
      total1 += inv * lj.item();
      param1 += inv * l1.param;
      pho1 += inv * l2.pho;
    }
    p1.clip_grad_norm(config.clip_norm);
    const double lr1 = lr_at(config.schedule_stage1, config.lr_stage1, it, config.joint_iterations, config.warmup);
    adam1.step(p1, lr1);
    p2.zero_grad();
    const bool s2_ok = p2.hash() == h2_before;
    report.stage2_untouched_by_stage1_steps &= s2_ok;
    report.stage1.total.push_back(total1);
    report.stage1.param.push_back(param1);
    report.stage1.pho.push_back(pho1);
    if (log && it % config.log_every == 0) {
      log->write({{"iter", it},
                  {"phase", "joint"},
                  {"step", "stage1"},
                  {"lr", lr1},
                  {"stage2_hash_stable", s2_ok},
                  {"losses", {{"total", total1}, {"param", param1}, {"pho", pho1}}}});
    }

    // (b) stage-2 step on L_stage2 with ground-truth motion.
    const uint64_t h1_before = p1.hash();
    p2.zero_grad();
    const PreparedClip& clip = data[pick(rng)];
    const Mat ref = Eigen::Map<const Mat>(clip.posed.row(clip.ref_frame).data(), morph.num_vertices, 3);
    renderer::MeshGaussians g = stage2.build(clip.reference, ref, clip.clip->camera);
    std::vector<Index> pool(static_cast<size_t>(clip.clip->frame_count()));
    std::iota(pool.begin(), pool.end(), 0);
    const std::vector<Index> fr = sample_without_replacement(pool, config.batch_stage2, rng);
    Mat rows(static_cast<Index>(fr.size()), clip.posed.cols());
    std::vector<const io::Image*> gt_img;
    for (size_t i = 0; i < fr.size(); ++i) {
      rows.row(static_cast<Index>(i)) = clip.posed.row(fr[i]);
      gt_img.push_back(frame_ptr(clip, fr[i]));
    }
    renderer::Stage2Loss l2 =
        render_loss(stage2, g, ag::Tensor::constant(rows), gt_img, clip.clip->camera, config.stage2_weights);
    l2.total.backward();
    p2.clip_grad_norm(config.clip_norm);
    const double lr2 = lr_at(config.schedule_stage2, config.lr_stage2, it, config.joint_iterations, config.warmup);
    adam2.step(p2, lr2);
    p1.zero_grad();
    const bool s1_ok = p1.hash() == h1_before;
    report.stage1_untouched_by_stage2_steps &= s1_ok;
    report.stage2.total.push_back(l2.total.item());
    report.stage2.pho.push_back(l2.pho);
    if (log && it % config.log_every == 0) {
      log->write({{"iter", it},
                  {"phase", "joint"},
                  {"step", "stage2"},
                  {"lr", lr2},
                  {"stage1_hash_stable", s1_ok},
                  {"losses", {{"total", l2.total.item()}, {"pho", l2.pho}, {"per", l2.per}}}});
    }
  }
  p1.zero_grad();
  p2.zero_grad();
  return report;
}

}  // namespace mango::training

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

#include "mango/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mango/core/errors.hpp"
#include "mango/core/io.hpp"
#include "mango/dataio.hpp"
#include "mango/metrics.hpp"
#include "mango/motiongen.hpp"
#include "mango/renderer.hpp"
#include "mango/training.hpp"

namespace mango::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  uint64_t seed = 1;
  bool deterministic = false;
  std::string config;
};

struct Options {
  Common common;
  // data
  std::string data;
  std::string out;
  int clips = 40;
  double seconds = 10.0;
  int val = 5;
  int test = 5;
  bool no_frames = false;
  // models
  std::string ckpt1, ckpt2, out1, out2;
  std::string clip, motion, pred, gt, report, log;
  int iterations = -1;
  int batch = -1;
  double lr = -1.0;
  double indicator_noise = -1.0;
  int window = 100;
  int prev_window = 10;
  int steps = 500;
  int ddim_steps = 0;
  std::string audio_encoder = "desk";
  bool render = false;
  int samples = 0;
  std::string external_scorer;
  double alpha = 0.0;
  std::vector<double> alphas;
  std::string source = "projected-3d";
  std::string png;
};

morphable::MorphableModel data_model(const fs::path& root) {
  if (!root.empty() && fs::exists(root / "model" / "manifest.json")) return morphable::load_model(root / "model");
  return dataio::desk_model();
}

fs::path data_root(const Options& o) {
  if (!o.data.empty()) return o.data;
  if (const char* env = std::getenv("MANGO_DATA")) return env;
  throw ArgumentError("no dataset root: pass --data or set MANGO_DATA");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ArgumentError(std::string("missing required flag ") + flag);
}

void require_dir_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw ArgumentError(std::string(what) + " does not exist: " + p.string());
}

training::TrainConfig train_config(const Options& o, const io::Json& cfg) {
  training::TrainConfig c;
  c.seed = o.common.seed;
  c.audio_encoder = o.audio_encoder;
  if (cfg.contains("train")) c = training::TrainConfig::from_json(cfg.at("train"), c);
  if (o.iterations >= 0) c.stage1_iterations = c.stage2_iterations = c.joint_iterations = o.iterations;
  if (o.lr > 0) c.lr_stage1 = c.lr_stage2 = o.lr;
  if (o.indicator_noise >= 0) c.indicator_noise = o.indicator_noise;
  return c;
}

// Config-file keys that name flags are appended after argv, so they win over flags.
std::vector<std::string> apply_config(const std::vector<std::string>& argv, io::Json& cfg) {
  std::string path;
  for (size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--config") path = argv[i + 1];
  for (const auto& a : argv)
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  std::vector<std::string> out = argv;
  if (path.empty()) return out;
  if (!fs::exists(path)) throw ArgumentError("config file not found: " + path);
  try {
    cfg = io::read_json(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [k, v] : cfg.items()) {
    if (k == "train") continue;
    if (v.is_boolean()) {
      if (v.get<bool>()) out.push_back("--" + k);
      continue;
    }
    if (v.is_array()) {
      for (const auto& e : v) {
        out.push_back("--" + k);
        out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      }
      continue;
    }
    out.push_back("--" + k);
    out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  }
  return out;
}

motiongen::Stage1Config stage1_config(const Options& o) {
  motiongen::Stage1Config c;
  c.window.curr = o.window;
  c.window.prev = o.prev_window;
  c.diffusion_steps = o.steps;
  c.seed = o.common.seed;
  if (o.window < 1 || o.prev_window < 0) throw ArgumentError("--window must be positive and --prev-window >= 0");
  if (o.steps < 1) throw ArgumentError("--steps must be positive");
  return c;
}

void write_log_sink(const Options& o, std::unique_ptr<std::ofstream>& file, training::TrainLog& log,
                    std::ostream& err) {
  if (o.log.empty()) {
    log = training::TrainLog(&err);
    return;
  }
  file = std::make_unique<std::ofstream>(o.log, std::ios::binary);
  if (!*file) throw std::runtime_error("cannot write log " + o.log);
  log = training::TrainLog(file.get());
}

int cmd_synth(const Options& o, std::ostream& err) {
  require(o.out, "--out");
  if (o.clips < 1) throw ArgumentError("--clips must be positive");
  if (o.seconds * audio::kFrameRate < 20) throw ArgumentError("--seconds too small (need at least 20 frames)");
  dataio::SynthDatasetOptions so;
  so.clips = o.clips;
  so.seconds = o.seconds;
  so.val = std::min(o.val, std::max(0, (o.clips - 1) / 2));
  so.test = std::min(o.test, std::max(0, o.clips - 1 - so.val));
  so.clip.render_frames = !o.no_frames;
  const auto m = dataio::synth_dataset(o.out, o.common.seed, so);
  err << "wrote " << m.paths.size() << " clips to " << o.out << "\n";
  return kExitOk;
}

int cmd_train1(const Options& o, const io::Json& cfg, std::ostream& err) {
  require(o.out, "--out");
  const fs::path root = data_root(o);
  training::TrainConfig tc = train_config(o, cfg);
  if (o.batch > 0) tc.batch_stage1 = o.batch;
  const motiongen::Stage1Config sc = stage1_config(o);
  tc.validate(sc.window);
  audio::make_encoder(tc.audio_encoder);
  const auto clips = dataio::load_split(root, "train");
  const auto model = data_model(root);
  motiongen::Stage1Model s1(sc);
  std::unique_ptr<std::ofstream> f;
  training::TrainLog log;
  write_log_sink(o, f, log, err);
  training::pretrain_stage1(s1, clips, model, tc, &log);
  s1.save(o.out);
  return kExitOk;
}

int cmd_train2(const Options& o, const io::Json& cfg, std::ostream& err) {
  require(o.out, "--out");
  const fs::path root = data_root(o);
  training::TrainConfig tc = train_config(o, cfg);
  if (o.batch > 0) tc.batch_stage2 = o.batch;
  tc.validate(motiongen::WindowConfig{});
  const auto clips = dataio::load_split(root, "train");
  const auto model = data_model(root);
  renderer::Stage2Config c2;
  c2.seed = o.common.seed;
  renderer::Stage2Model s2(c2, model);
  std::unique_ptr<std::ofstream> f;
  training::TrainLog log;
  write_log_sink(o, f, log, err);
  training::pretrain_stage2(s2, clips, model, tc, &log);
  s2.save(o.out);
  return kExitOk;
}

int cmd_joint(const Options& o, const io::Json& cfg, std::ostream& err) {
  require(o.ckpt1, "--ckpt1");
  require(o.ckpt2, "--ckpt2");
  require(o.out1, "--out1");
  require(o.out2, "--out2");
  const fs::path root = data_root(o);
  training::TrainConfig tc = train_config(o, cfg);
  if (o.batch > 0) tc.batch_joint = o.batch;
  const auto model = data_model(root);
  motiongen::Stage1Model s1 = motiongen::Stage1Model::load(o.ckpt1);
  renderer::Stage2Model s2 = renderer::Stage2Model::load(o.ckpt2, model);
  tc.validate(s1.config().window);
  const auto clips = dataio::load_split(root, "train");
  std::unique_ptr<std::ofstream> f;
  training::TrainLog log;
  write_log_sink(o, f, log, err);
  training::joint_train(s1, s2, clips, model, tc, &log);
  s1.save(o.out1);
  s2.save(o.out2);
  return kExitOk;
}

std::vector<io::Image> render_motion(const renderer::Stage2Model& s2, const dataio::DialogueClip& clip,
                                     const Mat& motion, const morphable::MorphableModel& model) {
  if (!clip.has_frames()) throw ArgumentError("rendering needs the clip's reference frame");
  ag::NoGradGuard ng;
  const Mat posed = morphable::decode_sequence(model, clip.beta, motion, false);
  const Mat ref_posed = morphable::decode_sequence(model, clip.beta, clip.motion.topRows(1), false);
  const renderer::RefEncoding ref = renderer::encode_reference(clip.frames.front(), s2.config().encoder_id);
  const auto g = s2.build(ref, Eigen::Map<const Mat>(ref_posed.data(), model.num_vertices, 3), clip.camera);
  const int h = clip.camera.intrinsics.height, w = clip.camera.intrinsics.width;
  std::vector<io::Image> frames;
  for (Index t = 0; t < posed.rows(); ++t) {
    const Mat v = Eigen::Map<const Mat>(posed.row(t).data(), model.num_vertices, 3);
    frames.push_back(renderer::to_image(s2.render(g, ag::Tensor::constant(v), clip.camera).value(), h, w));
  }
  return frames;
}

void write_frames(const std::vector<io::Image>& frames, const fs::path& dir) {
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    io::write_png(dir / name, frames[i]);
  }
}

int cmd_generate(const Options& o, std::ostream& err) {
  require(o.ckpt1, "--ckpt");
  require(o.clip, "--clip");
  require(o.out, "--out");
  if (o.render) require(o.ckpt2, "--ckpt2");
  if (o.samples < 0) throw ArgumentError("--samples must be >= 0");
  require_dir_exists(o.clip, "clip");
  const dataio::DialogueClip clip = dataio::load_clip(o.clip);
  const motiongen::Stage1Model s1 = motiongen::Stage1Model::load(o.ckpt1);
  const auto model = data_model(fs::path(o.clip).parent_path());
  if (s1.config().denoiser.motion_dim != model.motion_dim()) throw ConfigError("checkpoint/model motion width mismatch");
  audio::make_encoder(o.audio_encoder);
  const auto features = motiongen::encode_clip(clip.audio_self, clip.audio_other, clip.indicator, o.audio_encoder);
  motiongen::GenerateOptions go;
  go.seed = o.common.seed;
  go.stride_steps = o.ddim_steps;
  fs::create_directories(o.out);
  const Mat motion = motiongen::generate(features, clip.beta, s1, go);
  io::write_f32_matrix(fs::path(o.out) / "motion.f32", motion);
  io::write_json(fs::path(o.out) / "manifest.json", {{"frames", motion.rows()},
                                                      {"motion_dim", motion.cols()},
                                                      {"seed", o.common.seed},
                                                      {"ddim_steps", o.ddim_steps},
                                                      {"clip_id", clip.clip_id}});
  for (int k = 0; k < o.samples; ++k) {
    go.seed = o.common.seed + 1 + static_cast<uint64_t>(k);
    char name[32];
    std::snprintf(name, sizeof(name), "%03d.f32", k);
    fs::create_directories(fs::path(o.out) / "samples");
    io::write_f32_matrix(fs::path(o.out) / "samples" / name, motiongen::generate(features, clip.beta, s1, go));
  }
  if (o.render) {
    const renderer::Stage2Model s2 = renderer::Stage2Model::load(o.ckpt2, model);
    Mat rounded = motion;
    io::round_to_f32(rounded);
    write_frames(render_motion(s2, clip, rounded, model), fs::path(o.out) / "frames");
  }
  err << "generated " << motion.rows() << " frames\n";
  return kExitOk;
}

int cmd_render(const Options& o, std::ostream& err) {
  require(o.ckpt2, "--ckpt2");
  require(o.clip, "--clip");
  require(o.out, "--out");
  require_dir_exists(o.clip, "clip");
  const dataio::DialogueClip clip = dataio::load_clip(o.clip);
  const auto model = data_model(fs::path(o.clip).parent_path());
  Mat motion = clip.motion;
  if (!o.motion.empty()) motion = io::read_f32_matrix(o.motion, clip.frame_count(), model.motion_dim());
  const renderer::Stage2Model s2 = renderer::Stage2Model::load(o.ckpt2, model);
  write_frames(render_motion(s2, clip, motion, model), o.out);
  err << "rendered " << motion.rows() << " frames\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.pred, "--pred");
  require(o.gt, "--gt");
  require(o.report, "--report");
  require_dir_exists(o.pred, "prediction directory");
  require_dir_exists(o.gt, "ground-truth clip");
  const dataio::DialogueClip clip = dataio::load_clip(o.gt);
  const auto model = data_model(fs::path(o.gt).parent_path());
  metrics::EvaluationInputs in;
  in.gt = clip.motion;
  in.pred = io::read_f32_matrix(fs::path(o.pred) / "motion.f32", clip.frame_count(), model.motion_dim());
  const fs::path sdir = fs::path(o.pred) / "samples";
  if (fs::exists(sdir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(sdir))
      if (e.path().extension() == ".f32") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) in.pred_samples.push_back(io::read_f32_matrix(f, clip.frame_count(), model.motion_dim()));
  }
  in.indicator = clip.indicator.bits;
  in.energy = audio::frame_rms(clip.audio_self, clip.frame_count());
  in.beta = clip.beta;
  const fs::path fdir = fs::path(o.pred) / "frames";
  if (fs::exists(fdir) && clip.has_frames()) {
    char name[32];
    for (Index t = 0; t < clip.frame_count(); ++t) {
      std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(t));
      in.pred_frames.push_back(io::read_png(fdir / name));
    }
    in.gt_frames = clip.frames;
  }
  metrics::MetricReport report = metrics::evaluate(in, model);
  io::Json j = report.to_json();
  if (!o.external_scorer.empty()) {
    if (!fs::exists(fdir)) throw ArgumentError("--external-scorer needs rendered frames in " + fdir.string());
    j["external"] = metrics::run_external_scorer(o.external_scorer, fdir);
  }
  const fs::path rp = o.report;
  if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
  io::write_json(rp, j);
  fs::path csv = rp;
  csv.replace_extension(".csv");
  std::ofstream(csv, std::ios::binary) << report.to_csv();
  out << j.at("metrics").dump() << "\n";
  (void)err;
  return kExitOk;
}

int cmd_perturb(const Options& o, std::ostream& err) {
  require(o.clip, "--clip");
  require(o.out, "--out");
  if (!(o.alpha >= 0.0 && o.alpha <= 1.0)) throw ArgumentError("--alpha must lie in [0, 1]");
  require_dir_exists(o.clip, "clip");
  const fs::path ip = fs::path(o.clip) / "indicator.bin";
  if (!fs::exists(ip)) throw FormatError("missing file " + ip.string());
  audio::IndicatorTrack ind;
  ind.bits = io::read_bytes(ip);
  ind.validate();
  const audio::IndicatorTrack p = dataio::perturb_indicator(ind, o.alpha, o.common.seed);
  const fs::path op = o.out;
  if (op.has_parent_path()) fs::create_directories(op.parent_path());
  io::write_bytes(op, p.bits);
  err << "flipped " << dataio::flip_count(o.alpha, static_cast<Index>(ind.size())) << " of " << ind.size()
      << " frames\n";
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& err) {
  require(o.ckpt1, "--ckpt");
  require(o.clip, "--clip");
  require(o.out, "--out");
  require_dir_exists(o.clip, "clip");
  std::vector<double> alphas = o.alphas.empty() ? dataio::alpha_grid() : o.alphas;
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ArgumentError("alphas must lie in [0, 1]");
  const dataio::DialogueClip clip = dataio::load_clip(o.clip);
  const auto model = data_model(fs::path(o.clip).parent_path());
  const motiongen::Stage1Model s1 = motiongen::Stage1Model::load(o.ckpt1);
  dataio::EvalOptions eo;
  eo.encoder_id = o.audio_encoder;
  eo.generate.seed = o.common.seed;
  eo.generate.stride_steps = o.ddim_steps;
  const auto pts = dataio::robustness_sweep(s1, clip, alphas, model, eo, o.common.seed);
  fs::create_directories(o.out);
  dataio::write_sweep(pts, fs::path(o.out) / "sweep.csv", fs::path(o.out) / "sweep.png");
  err << "swept " << pts.size() << " noise levels\n";
  return kExitOk;
}

int cmd_lip_curve(const Options& o, std::ostream& err) {
  require(o.clip, "--clip");
  require(o.out, "--out");
  require_dir_exists(o.clip, "clip");
  const dataio::DialogueClip clip = dataio::load_clip(o.clip);
  const auto model = data_model(fs::path(o.clip).parent_path());
  Mat motion = clip.motion;
  if (!o.motion.empty()) motion = io::read_f32_matrix(o.motion, clip.frame_count(), model.motion_dim());
  metrics::LipCurve curve;
  if (o.source == "projected-3d") {
    curve = metrics::lip_curve_projected(morphable::decode_sequence(model, clip.beta, motion, false), model, clip.camera);
  } else if (o.source == "annotated-2d") {
    if (!o.motion.empty()) throw ArgumentError("annotated-2d curves come from the clip, not --motion");
    curve = metrics::lip_curve_annotated(dataio::synth_lip_annotations(clip, model));
  } else {
    throw ArgumentError("--source must be annotated-2d or projected-3d");
  }
  Vec x(curve.values.size()), y = curve.values;
  for (Index t = 0; t < x.size(); ++t) {
    x(t) = static_cast<double>(t);
    if (!curve.valid[static_cast<size_t>(t)]) y(t) = std::numeric_limits<double>::quiet_NaN();
  }
  const fs::path op = o.out;
  if (op.has_parent_path()) fs::create_directories(op.parent_path());
  metrics::write_curve_csv(op, x, y, "frame", "lip_opening_px");
  if (!o.png.empty()) metrics::write_line_plot(o.png, {{x, y, {30, 90, 200}}});
  err << "wrote " << x.size() << " curve rows\n";
  return kExitOk;
}

}  // namespace

std::vector<std::string> command_names() {
  return {"synth-data", "train-stage1", "train-stage2", "train-joint",      "generate",
          "render",     "evaluate",     "perturb-indicator", "robustness-sweep", "lip-curve"};
}

int run(const std::vector<std::string>& argv_in, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Conversational 3D head generation pipeline", "mango"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);
  auto common = [&](CLI::App* s) {
    s->add_option("--seed", o.common.seed, "random seed");
    s->add_flag("--deterministic", o.common.deterministic, "serialize all work for reproducible output");
    s->add_option("--config", o.common.config, "JSON file whose keys override flags");
  };
  auto model_flags = [&](CLI::App* s) {
    s->add_option("--window", o.window, "current window length w");
    s->add_option("--prev-window", o.prev_window, "previous window length w_p");
    s->add_option("--steps", o.steps, "diffusion steps N");
    s->add_option("--audio-encoder", o.audio_encoder, "audio encoder id");
  };
  auto train_flags = [&](CLI::App* s) {
    s->add_option("--data", o.data, "dataset root (default $MANGO_DATA)");
    s->add_option("--iterations", o.iterations, "training iterations");
    s->add_option("--batch", o.batch, "batch size");
    s->add_option("--lr", o.lr, "base learning rate");
    s->add_option("--indicator-noise", o.indicator_noise, "max flipped indicator fraction per stage-1 window");
    s->add_option("--log", o.log, "JSON-lines log file (default stderr)");
  };

  auto* synth = app.add_subcommand("synth-data", "write a synthetic dialogue dataset");
  common(synth);
  synth->add_option("--out", o.out, "dataset root");
  synth->add_option("--clips", o.clips, "number of clips");
  synth->add_option("--seconds", o.seconds, "clip length in seconds");
  synth->add_option("--val", o.val, "validation clips");
  synth->add_option("--test", o.test, "test clips");
  synth->add_flag("--no-frames", o.no_frames, "skip rendering ground-truth frames");

  auto* t1 = app.add_subcommand("train-stage1", "pretrain the motion generator");
  common(t1);
  train_flags(t1);
  model_flags(t1);
  t1->add_option("--out", o.out, "checkpoint directory");

  auto* t2 = app.add_subcommand("train-stage2", "pretrain the renderer");
  common(t2);
  train_flags(t2);
  t2->add_option("--out", o.out, "checkpoint directory");

  auto* tj = app.add_subcommand("train-joint", "alternate stage-1 and stage-2 updates");
  common(tj);
  train_flags(tj);
  tj->add_option("--audio-encoder", o.audio_encoder, "audio encoder id");
  tj->add_option("--ckpt1", o.ckpt1, "stage-1 checkpoint");
  tj->add_option("--ckpt2", o.ckpt2, "stage-2 checkpoint");
  tj->add_option("--out1", o.out1, "output stage-1 checkpoint");
  tj->add_option("--out2", o.out2, "output stage-2 checkpoint");

  auto* gen = app.add_subcommand("generate", "generate motion for a clip");
  common(gen);
  gen->add_option("--ckpt", o.ckpt1, "stage-1 checkpoint");
  gen->add_option("--ckpt2", o.ckpt2, "stage-2 checkpoint (with --render)");
  gen->add_option("--clip", o.clip, "clip directory");
  gen->add_option("--out", o.out, "output directory");
  gen->add_option("--ddim-steps", o.ddim_steps, "strided sampling steps (0 = all)");
  gen->add_option("--audio-encoder", o.audio_encoder, "audio encoder id");
  gen->add_option("--samples", o.samples, "extra generations for diversity");
  gen->add_flag("--render", o.render, "also render frames");

  auto* ren = app.add_subcommand("render", "render motion with a stage-2 checkpoint");
  common(ren);
  ren->add_option("--ckpt2", o.ckpt2, "stage-2 checkpoint");
  ren->add_option("--clip", o.clip, "clip directory (reference frame, camera, shape)");
  ren->add_option("--motion", o.motion, "motion.f32 (default: the clip's motion)");
  ren->add_option("--out", o.out, "frame directory");

  auto* ev = app.add_subcommand("evaluate", "compute the metric report");
  common(ev);
  ev->add_option("--pred", o.pred, "generation directory");
  ev->add_option("--gt", o.gt, "ground-truth clip directory");
  ev->add_option("--report", o.report, "report.json path (a .csv is written beside it)");
  ev->add_option("--external-scorer", o.external_scorer, "command scoring a frame directory, printing JSON");

  auto* pi = app.add_subcommand("perturb-indicator", "apply consecutive misattribution noise");
  common(pi);
  pi->add_option("--clip", o.clip, "clip directory");
  pi->add_option("--alpha", o.alpha, "segment length fraction");
  pi->add_option("--out", o.out, "output indicator.bin");

  auto* rs = app.add_subcommand("robustness-sweep", "MVE against indicator noise level");
  common(rs);
  rs->add_option("--ckpt", o.ckpt1, "stage-1 checkpoint");
  rs->add_option("--clip", o.clip, "clip directory");
  rs->add_option("--out", o.out, "output directory");
  rs->add_option("--alphas", o.alphas, "noise levels (default 0, 0.05, ..., 1)");
  rs->add_option("--ddim-steps", o.ddim_steps, "strided sampling steps (0 = all)");
  rs->add_option("--audio-encoder", o.audio_encoder, "audio encoder id");

  auto* lc = app.add_subcommand("lip-curve", "lip-opening curve of a clip");
  common(lc);
  lc->add_option("--clip", o.clip, "clip directory");
  lc->add_option("--motion", o.motion, "motion.f32 (default: the clip's motion)");
  lc->add_option("--source", o.source, "annotated-2d or projected-3d");
  lc->add_option("--out", o.out, "curve.csv");
  lc->add_option("--png", o.png, "optional plot");

  try {
    io::Json cfg = io::Json::object();
    const std::vector<std::string> argv = apply_config(argv_in, cfg);
    std::vector<std::string> rev(argv.rbegin(), argv.rend() - 1);
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n" << app.help();
      return kExitValidation;
    }
    if (synth->parsed()) return cmd_synth(o, err);
    if (t1->parsed()) return cmd_train1(o, cfg, err);
    if (t2->parsed()) return cmd_train2(o, cfg, err);
    if (tj->parsed()) return cmd_joint(o, cfg, err);
    if (gen->parsed()) return cmd_generate(o, err);
    if (ren->parsed()) return cmd_render(o, err);
    if (ev->parsed()) return cmd_evaluate(o, out, err);
    if (pi->parsed()) return cmd_perturb(o, err);
    if (rs->parsed()) return cmd_sweep(o, err);
    if (lc->parsed()) return cmd_lip_curve(o, err);
    err << app.help();
    return kExitValidation;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mango::cli

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

#include "mango/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "mango/core/errors.hpp"
#include "mango/metrics.hpp"
#include "mango/renderer.hpp"

namespace mango::dataio {

namespace {

std::string frame_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", i);
  return buf;
}

io::Json camera_json(const morphable::CameraPose& c) {
  std::vector<double> ext(16);
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) ext[static_cast<size_t>(4 * r + k)] = c.extrinsic(r, k);
  const auto& in = c.intrinsics;
  return {{"extrinsic", ext},
          {"focal", in.focal},
          {"cx", in.cx},
          {"cy", in.cy},
          {"width", in.width},
          {"height", in.height}};
}

morphable::CameraPose camera_from_json(const io::Json& j) {
  morphable::CameraPose c;
  const auto ext = j.at("extrinsic").get<std::vector<double>>();
  if (ext.size() != 16) throw FormatError("camera extrinsic must have 16 values");
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) c.extrinsic(r, k) = ext[static_cast<size_t>(4 * r + k)];
  c.intrinsics.focal = j.at("focal");
  c.intrinsics.cx = j.at("cx");
  c.intrinsics.cy = j.at("cy");
  c.intrinsics.width = j.at("width");
  c.intrinsics.height = j.at("height");
  return c;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Band-limited noise: difference of two one-pole low-pass filters, unit RMS.
std::vector<double> speech_noise(size_t n, nn::Rng& rng) {
  std::normal_distribution<double> gauss;
  const double a_hi = std::exp(-2.0 * M_PI * 3000.0 / audio::kSampleRate);
  const double a_lo = std::exp(-2.0 * M_PI * 300.0 / audio::kSampleRate);
  std::vector<double> out(n);
  double hi = 0.0, lo = 0.0, energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double x = gauss(rng);
    hi = a_hi * hi + (1.0 - a_hi) * x;
    lo = a_lo * lo + (1.0 - a_lo) * x;
    out[i] = hi - lo;
    energy += out[i] * out[i];
  }
  const double rms = std::sqrt(energy / static_cast<double>(std::max<size_t>(n, 1)));
  for (double& v : out) v /= rms;
  return out;
}

// Smooth syllabic envelope in [0.05, 1] per frame.
Vec syllable_envelope(Index frames, nn::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f1 = 3.0 + 2.0 * u(rng), f2 = 1.0 + u(rng);
  const double p1 = 2.0 * M_PI * u(rng), p2 = 2.0 * M_PI * u(rng);
  Vec e(frames);
  for (Index t = 0; t < frames; ++t) {
    const double s = t / audio::kFrameRate;
    const double v = 0.55 + 0.45 * (0.6 * std::sin(2.0 * M_PI * f1 * s + p1) + 0.4 * std::sin(2.0 * M_PI * f2 * s + p2));
    e(t) = std::clamp(v, 0.05, 1.0);
  }
  return e;
}

// Per-sample amplitude linearly interpolated between frame centres.
std::vector<double> modulate(const std::vector<double>& noise, const Vec& frame_amp) {
  std::vector<double> out(noise.size());
  const double spf = static_cast<double>(kSamplesPerFrame);
  for (size_t i = 0; i < noise.size(); ++i) {
    const double f = (static_cast<double>(i) + 0.5) / spf - 0.5;
    const Index f0 = std::clamp<Index>(static_cast<Index>(std::floor(f)), 0, frame_amp.size() - 1);
    const Index f1 = std::min<Index>(f0 + 1, frame_amp.size() - 1);
    const double w = std::clamp(f - static_cast<double>(f0), 0.0, 1.0);
    out[i] = noise[i] * ((1.0 - w) * frame_amp(f0) + w * frame_amp(f1));
  }
  return out;
}

}  // namespace

const morphable::MorphableModel& desk_model() {
  static const morphable::MorphableModel model = morphable::build_mini_model(kDeskModelSeed);
  return model;
}

void DialogueClip::validate() const {
  const Index t = frame_count();
  if (t == 0) throw ValidationError("clip " + clip_id + " has zero frames");
  if (static_cast<Index>(indicator.size()) != t) {
    throw ValidationError("clip " + clip_id + ": indicator has " + std::to_string(indicator.size()) +
                          " frames, motion has " + std::to_string(t));
  }
  if (has_frames() && static_cast<Index>(frames.size()) != t) {
    throw ValidationError("clip " + clip_id + ": " + std::to_string(frames.size()) + " images for " +
                          std::to_string(t) + " frames");
  }
  for (const auto* a : {&audio_self, &audio_other}) {
    if (a->sample_rate != audio::kSampleRate) throw ValidationError("clip " + clip_id + ": audio must be 16 kHz");
    const auto expected = t * kSamplesPerFrame;
    if (std::abs(static_cast<Index>(a->samples.size()) - expected) > kSamplesPerFrame) {
      throw ValidationError("clip " + clip_id + ": audio has " + std::to_string(a->samples.size()) +
                            " samples, expected about " + std::to_string(expected));
    }
  }
  for (uint8_t b : indicator.bits)
    if (b > 1) throw ValidationError("clip " + clip_id + ": indicator values must be 0 or 1");
}

void save_clip(const DialogueClip& clip, const fs::path& dir) {
  clip.validate();
  fs::create_directories(dir);
  io::Json m;
  m["format"] = kFormatVersion;
  m["clip_id"] = clip.clip_id;
  m["speaker_id"] = clip.speaker_id;
  m["frames"] = clip.frame_count();
  m["fps"] = audio::kFrameRate;
  m["sample_rate"] = audio::kSampleRate;
  m["motion_dim"] = clip.motion.cols();
  m["camera"] = camera_json(clip.camera);
  m["beta"] = std::vector<double>(clip.beta.data(), clip.beta.data() + clip.beta.size());
  m["has_frames"] = clip.has_frames();
  io::write_json(dir / "manifest.json", m);
  audio::save_wav(clip.audio_self, dir / "audio_self.wav");
  audio::save_wav(clip.audio_other, dir / "audio_other.wav");
  io::write_bytes(dir / "indicator.bin", clip.indicator.bits);
  io::write_f32_matrix(dir / "motion.f32", clip.motion);
  if (clip.has_frames()) {
    fs::create_directories(dir / "frames");
    for (size_t i = 0; i < clip.frames.size(); ++i) io::write_png(dir / "frames" / frame_name(i), clip.frames[i]);
  }
}

DialogueClip load_clip(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw FormatError("missing file " + mpath.string());
  const io::Json m = io::read_json(mpath);
  DialogueClip c;
  Index frames = 0, dim = 0;
  bool has_frames = false;
  try {
    if (m.at("format").get<int>() != kFormatVersion) throw FormatError(mpath.string() + ": unsupported format");
    c.clip_id = m.at("clip_id");
    c.speaker_id = m.at("speaker_id");
    frames = m.at("frames");
    dim = m.at("motion_dim");
    c.camera = camera_from_json(m.at("camera"));
    const auto beta = m.at("beta").get<std::vector<double>>();
    c.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Index>(beta.size()));
    has_frames = m.at("has_frames");
  } catch (const io::Json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  c.audio_self = audio::load_wav(dir / "audio_self.wav");
  c.audio_other = audio::load_wav(dir / "audio_other.wav");
  const fs::path ipath = dir / "indicator.bin";
  if (!fs::exists(ipath)) throw FormatError("missing file " + ipath.string());
  c.indicator.bits = io::read_bytes(ipath);
  if (static_cast<Index>(c.indicator.size()) != frames) {
    throw ValidationError(ipath.string() + ": expected " + std::to_string(frames) + " bytes, found " +
                          std::to_string(c.indicator.size()));
  }
  c.motion = io::read_f32_matrix(dir / "motion.f32", frames, dim);
  if (has_frames) {
    for (Index i = 0; i < frames; ++i) {
      const fs::path p = dir / "frames" / frame_name(static_cast<size_t>(i));
      if (!fs::exists(p)) throw ValidationError("missing frame " + p.string() + " of " + std::to_string(frames));
      c.frames.push_back(io::read_png(p));
    }
  }
  c.validate();
  return c;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto* split : {&train, &val, &test}) {
    for (const auto& id : *split) {
      if (!seen.insert(id).second) throw ValidationError("dataset manifest: clip " + id + " appears in two splits");
      if (!paths.count(id)) throw ValidationError("dataset manifest: no path for clip " + id);
    }
  }
  std::set<std::string> train_speakers;
  for (const auto& id : train) {
    auto it = speakers.find(id);
    if (it != speakers.end()) train_speakers.insert(it->second);
  }
  for (const auto& id : test) {
    auto it = speakers.find(id);
    if (it != speakers.end() && train_speakers.count(it->second)) {
      throw ValidationError("dataset manifest: test speaker " + it->second + " also appears in train");
    }
  }
}

io::Json DatasetManifest::to_json() const {
  return {{"format", format}, {"train", train}, {"val", val}, {"test", test}, {"paths", paths}, {"speakers", speakers}};
}

DatasetManifest DatasetManifest::from_json(const io::Json& j) {
  DatasetManifest m;
  try {
    m.format = j.at("format");
    if (m.format != kFormatVersion) throw FormatError("dataset manifest: unsupported format");
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    m.paths = j.at("paths").get<std::map<std::string, std::string>>();
    m.speakers = j.value("speakers", std::map<std::string, std::string>());
  } catch (const io::Json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& root) {
  manifest.validate();
  fs::create_directories(root);
  io::write_json(root / "manifest.json", manifest.to_json());
}

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path p = root / "manifest.json";
  if (!fs::exists(p)) throw FormatError("missing file " + p.string());
  return DatasetManifest::from_json(io::read_json(p));
}

std::vector<DialogueClip> load_split(const fs::path& root, const std::string& split) {
  const DatasetManifest m = load_manifest(root);
  const std::vector<std::string>* ids = split == "train" ? &m.train : split == "val" ? &m.val : split == "test" ? &m.test : nullptr;
  if (!ids) throw ArgumentError("unknown split '" + split + "'");
  std::vector<DialogueClip> clips;
  for (const auto& id : *ids) clips.push_back(load_clip(root / m.paths.at(id)));
  return clips;
}

Mat render_teacher(const morphable::MorphableModel& model, const Mat& posed, const morphable::CameraPose& camera) {
  const Index v = model.num_vertices;
  const Mat pts = posed.rows() == 1 ? Mat(Eigen::Map<const Mat>(posed.data(), v, 3)) : posed;
  if (pts.rows() != v || pts.cols() != 3) throw ArgumentError("render_teacher: vertex count mismatch");
  const Mat& tv = model.template_vertices;
  std::set<int> lips(model.lip_all.begin(), model.lip_all.end());
  Mat app = Mat::Zero(v, renderer::kAppearanceDim);
  for (Index i = 0; i < v; ++i) {
    const double x = tv(i, 0), y = tv(i, 1), z = tv(i, 2);
    std::array<double, 3> c{0.87, 0.68, 0.56};
    const double eye = std::hypot(std::abs(x) - 0.03, y - 0.03);
    if (z < -0.02 || y > 0.07) {
      c = {0.25, 0.18, 0.12};
    } else if (z > 0.03 && std::abs(y + 0.035) < 0.009 && std::abs(x) < 0.03) {
      c = {0.75, 0.30, 0.32};
    } else if (z > 0.03 && eye < 0.012) {
      c = {0.12, 0.10, 0.10};
    }
    for (int k = 0; k < 3; ++k) app(i, k) = logit(c[static_cast<size_t>(k)]);
  }
  const double edge = renderer::mean_edge_length(model, pts);
  Mat rot = Mat::Zero(v, 4);
  rot.col(0).setOnes();
  const Mat scale = Mat::Constant(v, 3, std::log(0.6 * edge));
  const Mat opacity = Mat::Constant(v, 1, 0.95);
  ag::NoGradGuard no_grad;
  const renderer::SplatResult s =
      renderer::splat(renderer::GaussianSet::from_values(pts, rot, scale, opacity, app), camera);
  const Mat rgb = s.features.value().leftCols(3);
  return (1.0 / (1.0 + (-rgb.array()).exp())).matrix();
}

DialogueClip synth_clip(uint64_t seed, Index frames, const morphable::MorphableModel& model,
                        const SynthOptions& options) {
  if (frames < 20) throw ArgumentError("synth_clip needs at least 20 frames");
  nn::Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x51ed);
  std::uniform_int_distribution<int> turn_len(25, 45);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss;

  DialogueClip c;
  c.clip_id = "synth-" + std::to_string(seed);
  c.speaker_id = "spk-" + std::to_string(seed);
  c.indicator.bits.resize(static_cast<size_t>(frames));
  uint8_t state = u(rng) < 0.5 ? 1 : 0;
  std::vector<std::pair<Index, Index>> turns;  // [start, end)
  for (Index t = 0; t < frames;) {
    const Index end = std::min<Index>(frames, t + turn_len(rng));
    for (Index k = t; k < end; ++k) c.indicator.bits[static_cast<size_t>(k)] = state;
    turns.emplace_back(t, end);
    t = end;
    state ^= 1;
  }

  const Vec env_self = syllable_envelope(frames, rng), env_other = syllable_envelope(frames, rng);
  Vec amp_self(frames), amp_other(frames);
  for (Index t = 0; t < frames; ++t) {
    const bool speaking = c.indicator.bits[static_cast<size_t>(t)];
    amp_self(t) = speaking ? 0.25 * env_self(t) : 0.004;
    amp_other(t) = speaking ? 0.004 : 0.25 * env_other(t);
  }
  const auto n = static_cast<size_t>(frames * kSamplesPerFrame);
  c.audio_self.samples = modulate(speech_noise(n, rng), amp_self);
  c.audio_other.samples = modulate(speech_noise(n, rng), amp_other);
  io::quantize16(c.audio_self.samples);
  io::quantize16(c.audio_other.samples);

  const Index e = model.num_expr;
  c.motion = Mat::Zero(frames, model.motion_dim());
  const Vec rms = audio::frame_rms(c.audio_self, frames);
  double peak = 0.0;
  for (Index t = 0; t < frames; ++t)
    if (c.indicator.bits[static_cast<size_t>(t)]) peak = std::max(peak, rms(t));
  if (peak <= 0.0) peak = 1.0;
  for (Index t = 0; t < frames; ++t) {
    if (!c.indicator.bits[static_cast<size_t>(t)]) continue;
    const double level = rms(t) / peak;
    c.motion(t, model.jaw_offset()) = 0.25 * level;
    c.motion(t, 0) = 0.8 * level;
  }
  // Smile pulses while listening.
  for (const auto& [s, end] : turns) {
    if (c.indicator.bits[static_cast<size_t>(s)] || e < 2 || u(rng) > 0.6) continue;
    const Index len = end - s;
    const double width = 12.0;
    const double centre = s + width / 2 + u(rng) * std::max(0.0, len - width);
    for (Index t = s; t < end; ++t) {
      const double d = (t - centre) / (width / 2);
      if (std::abs(d) < 1.0) c.motion(t, 1) = 1.5 * std::pow(std::cos(0.5 * M_PI * d), 2);
    }
  }
  // Slow idle expression drift and head sway.
  const Index drift = std::min<Index>(4, std::max<Index>(0, e - 2));
  std::vector<double> freq(static_cast<size_t>(drift + 3)), phase(freq.size());
  for (size_t k = 0; k < freq.size(); ++k) {
    freq[k] = 0.1 + 0.2 * u(rng);
    phase[k] = 2.0 * M_PI * u(rng);
  }
  const double head_amp[3] = {0.04, 0.05, 0.02};
  for (Index t = 0; t < frames; ++t) {
    const double s = t / audio::kFrameRate;
    for (Index k = 0; k < drift; ++k) {
      const auto i = static_cast<size_t>(k);
      c.motion(t, 2 + k) = 0.1 * std::sin(2.0 * M_PI * freq[i] * s + phase[i]);
    }
    for (int a = 0; a < 3; ++a) {
      const auto i = static_cast<size_t>(drift + a);
      c.motion(t, model.head_offset() + a) = head_amp[a] * std::sin(2.0 * M_PI * freq[i] * s + phase[i]);
    }
  }
  io::round_to_f32(c.motion);

  c.beta = Vec(model.num_shape);
  for (Index k = 0; k < model.num_shape; ++k) c.beta(k) = static_cast<float>(gauss(rng));
  c.camera = morphable::frontal_camera(0.5, options.intrinsics);
  if (options.render_frames) {
    const Mat posed = morphable::decode_sequence(model, c.beta, c.motion, false);
    const int h = options.intrinsics.height, w = options.intrinsics.width;
    for (Index t = 0; t < frames; ++t) {
      io::Image img = renderer::to_image(render_teacher(model, posed.row(t), c.camera), h, w);
      io::quantize8(img);
      c.frames.push_back(std::move(img));
    }
  }
  c.validate();
  return c;
}

DialogueClip synth_clip(uint64_t seed, Index frames) { return synth_clip(seed, frames, desk_model()); }

DatasetManifest synth_dataset(const fs::path& root, uint64_t seed, const SynthDatasetOptions& o) {
  if (o.clips < 1 || o.val < 0 || o.test < 0 || o.val + o.test >= o.clips) {
    throw ArgumentError("synth_dataset: need more clips than validation plus test clips");
  }
  const auto frames = static_cast<Index>(std::lround(o.seconds * audio::kFrameRate));
  DatasetManifest m;
  const auto& model = desk_model();
  for (int i = 0; i < o.clips; ++i) {
    const uint64_t clip_seed = seed * 1000 + static_cast<uint64_t>(i);
    DialogueClip c = synth_clip(clip_seed, frames, model, o.clip);
    char name[32];
    std::snprintf(name, sizeof(name), "clip%04d", i);
    save_clip(c, root / name);
    m.paths[c.clip_id] = name;
    m.speakers[c.clip_id] = c.speaker_id;
    if (i < o.clips - o.val - o.test) {
      m.train.push_back(c.clip_id);
    } else if (i < o.clips - o.test) {
      m.val.push_back(c.clip_id);
    } else {
      m.test.push_back(c.clip_id);
    }
  }
  morphable::save_model(model, root / "model");
  save_manifest(m, root);
  return m;
}

Mat synth_lip_annotations(const DialogueClip& clip, const morphable::MorphableModel& model) {
  const Mat posed = morphable::decode_sequence(model, clip.beta, clip.motion, false);
  const auto pairs = static_cast<Index>(model.lip_upper.size());
  Mat kp(posed.rows(), 4 * pairs);
  Mat pts(2 * pairs, 3);
  for (Index t = 0; t < posed.rows(); ++t) {
    for (Index p = 0; p < pairs; ++p) {
      pts.row(2 * p) = posed.row(t).segment<3>(3 * model.lip_upper[static_cast<size_t>(p)]);
      pts.row(2 * p + 1) = posed.row(t).segment<3>(3 * model.lip_lower[static_cast<size_t>(p)]);
    }
    const morphable::Projection pr = morphable::project(pts, clip.camera);
    for (Index k = 0; k < 2 * pairs; ++k) {
      for (int a = 0; a < 2; ++a) {
        kp(t, 2 * k + a) = pr.valid[static_cast<size_t>(k)] ? std::round(4.0 * pr.pixels(k, a)) / 4.0
                                                             : std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return kp;
}

Index flip_count(double alpha, Index length) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("perturbation fraction must lie in [0, 1]");
  // Guard the ceiling against representation error (0.3 * 100 = 30.000000000000004).
  const double x = alpha * static_cast<double>(length);
  const double r = std::round(x);
  const auto n = static_cast<Index>(std::abs(x - r) < 1e-9 ? r : std::ceil(x));
  return std::min(n, length);
}

audio::IndicatorTrack perturb_indicator(const audio::IndicatorTrack& indicator, double alpha, uint64_t seed) {
  const auto len = static_cast<Index>(indicator.size());
  const Index n = flip_count(alpha, len);
  audio::IndicatorTrack out = indicator;
  if (n == 0) return out;
  nn::Rng rng(seed);
  std::uniform_int_distribution<Index> start_dist(0, len - n);
  const Index start = start_dist(rng);
  for (Index i = start; i < start + n; ++i) out.bits[static_cast<size_t>(i)] ^= 1;
  return out;
}

std::vector<double> alpha_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 20; ++k) g.push_back(k / 20.0);
  return g;
}

double evaluate_mve(const motiongen::Stage1Model& stage1, const DialogueClip& clip,
                    const audio::IndicatorTrack& indicator, const morphable::MorphableModel& model,
                    const EvalOptions& options) {
  const motiongen::ClipFeatures f =
      motiongen::encode_clip(clip.audio_self, clip.audio_other, indicator, options.encoder_id);
  const Mat pred = motiongen::generate(f, clip.beta, stage1, options.generate);
  return metrics::mesh_metrics(pred, clip.motion, clip.beta, model).mve;
}

std::vector<SweepPoint> robustness_sweep(const motiongen::Stage1Model& stage1, const DialogueClip& clip,
                                         const std::vector<double>& alphas, const morphable::MorphableModel& model,
                                         const EvalOptions& options, uint64_t perturb_seed) {
  std::vector<SweepPoint> out;
  for (double a : alphas) {
    const audio::IndicatorTrack ind = perturb_indicator(clip.indicator, a, perturb_seed);
    out.push_back({a, evaluate_mve(stage1, clip, ind, model, options)});
  }
  return out;
}

void write_sweep(const std::vector<SweepPoint>& points, const fs::path& csv_path, const fs::path& png_path) {
  Vec x(static_cast<Index>(points.size())), y(x.size());
  for (size_t i = 0; i < points.size(); ++i) {
    x(static_cast<Index>(i)) = points[i].alpha;
    y(static_cast<Index>(i)) = 1e3 * points[i].mve;
  }
  metrics::write_curve_csv(csv_path, x, y, "alpha", "mve_mm");
  if (!png_path.empty()) metrics::write_line_plot(png_path, {{x, y, {200, 40, 40}}});
}

}  // namespace mango::dataio

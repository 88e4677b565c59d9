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

#include <sstream>

#include "helpers.hpp"
#include "mango/core/errors.hpp"
#include "mango/training.hpp"

using namespace mango;
using namespace mango::training;

namespace {

motiongen::Stage1Config tiny_stage1() {
  motiongen::Stage1Config c;
  c.dim.proj_dim = 8;
  c.dim.heads = 2;
  c.dim.layers = 1;
  c.dim.ff_hidden = 16;
  c.denoiser.cond_dim = 17;
  c.denoiser.model_dim = 16;
  c.denoiser.heads = 2;
  c.denoiser.layers = 1;
  c.denoiser.ff_hidden = 16;
  c.window = {3, 8};
  c.diffusion_steps = 20;
  return c;
}

renderer::Stage2Config tiny_stage2() {
  renderer::Stage2Config c;
  c.hidden = 8;
  c.uv_hidden = 8;
  c.uv_grid_width = 8;
  c.refiner_width = 4;
  return c;
}

const std::vector<dataio::DialogueClip>& clips() {
  static const std::vector<dataio::DialogueClip> c{dataio::synth_clip(31, 30), dataio::synth_clip(32, 30)};
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.stage1_iterations = 3;
  t.stage2_iterations = 2;
  t.joint_iterations = 2;
  t.batch_stage1 = 2;
  t.batch_stage2 = 1;
  t.batch_joint = 1;
  t.n_render_frames = 2;
  t.joint_chain_steps = 2;
  t.warmup = 1;
  t.seed = 9;
  return t;
}

}  // namespace

TEST_CASE("train config json") {
  TrainConfig t = tiny_train();
  t.phase = Phase::kJoint;
  t.lr_stage2 = 3e-5;
  t.indicator_noise = 0.25;
  const io::Json j = t.to_json();
  CHECK(TrainConfig::from_json(j).to_json() == j);
  CHECK(TrainConfig::from_json(io::Json::object()).to_json() == TrainConfig{}.to_json());
  CHECK(TrainConfig::from_json({{"batch_stage1", 4}}).batch_stage1 == 4);
  CHECK_THROWS_AS(TrainConfig::from_json({{"bacth_stage1", 4}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"phase", "pretrain3"}}), ConfigError);
  CHECK(parse_phase(phase_name(Phase::kPretrain2)) == Phase::kPretrain2);
}

TEST_CASE("train config validation") {
  const motiongen::WindowConfig w{10, 100};
  CHECK_NOTHROW(TrainConfig{}.validate(w));
  TrainConfig t;
  t.n_render_frames = 101;
  CHECK_THROWS_AS(t.validate(w), ConfigError);
  t = TrainConfig{};
  t.batch_stage1 = 0;
  CHECK_THROWS_AS(t.validate(w), ConfigError);
  t = TrainConfig{};
  t.lr_stage1 = -1;
  CHECK_THROWS_AS(t.validate(w), ConfigError);
  t = TrainConfig{};
  t.indicator_noise = 1.5;
  CHECK_THROWS_AS(t.validate(w), ConfigError);
}

TEST_CASE("stage-1 pretraining runs, logs and is deterministic") {
  const auto& morph = dataio::desk_model();
  motiongen::Stage1Model a(tiny_stage1()), b(tiny_stage1());
  std::ostringstream sink;
  TrainLog log(&sink);
  TrainConfig t = tiny_train();
  t.log_every = 1;
  const LossCurve ca = pretrain_stage1(a, clips(), morph, t, &log);
  const LossCurve cb = pretrain_stage1(b, clips(), morph, t);
  REQUIRE(ca.total.size() == 3);
  CHECK(ca.total == cb.total);
  CHECK(a.parameters().hash() == b.parameters().hash());
  CHECK(log.records().size() == 3);
  CHECK(log.records()[0].at("phase") == "pretrain1");
  const io::Json first = io::Json::parse(sink.str().substr(0, sink.str().find('\n')));
  CHECK(first.at("iter") == 0);
  for (double v : ca.total) CHECK(std::isfinite(v));
}

TEST_CASE("indicator noise augmentation") {
  const auto& morph = dataio::desk_model();
  TrainConfig t = tiny_train();
  motiongen::Stage1Model plain(tiny_stage1());
  pretrain_stage1(plain, clips(), morph, t);
  t.indicator_noise = 1.0;
  motiongen::Stage1Model a(tiny_stage1()), b(tiny_stage1());
  const LossCurve ca = pretrain_stage1(a, clips(), morph, t);
  pretrain_stage1(b, clips(), morph, t);
  CHECK(a.parameters().hash() == b.parameters().hash());
  CHECK(a.parameters().hash() != plain.parameters().hash());
  for (double v : ca.total) CHECK(std::isfinite(v));
}

TEST_CASE("stage-2 pretraining requires frames") {
  const auto& morph = dataio::desk_model();
  renderer::Stage2Model s2(tiny_stage2(), morph);
  dataio::SynthOptions o;
  o.render_frames = false;
  const std::vector<dataio::DialogueClip> bare{dataio::synth_clip(1, 30, morph, o)};
  CHECK_THROWS_AS(pretrain_stage2(s2, bare, morph, tiny_train()), ConfigError);
  const LossCurve c = pretrain_stage2(s2, clips(), morph, tiny_train());
  CHECK(c.pho.size() == 2);
  CHECK(c.pho[0] > 0.0);
}

TEST_CASE("joint steps only touch their own stage") {
  const auto& morph = dataio::desk_model();
  motiongen::Stage1Model s1(tiny_stage1());
  renderer::Stage2Model s2(tiny_stage2(), morph);
  const uint64_t h1 = s1.parameters().hash(), h2 = s2.parameters().hash();
  const JointReport r = joint_train(s1, s2, clips(), morph, tiny_train());
  CHECK(r.stage2_untouched_by_stage1_steps);
  CHECK(r.stage1_untouched_by_stage2_steps);
  CHECK(r.stage1.total.size() == 2);
  CHECK(r.stage2.total.size() == 2);
  CHECK(s1.parameters().hash() != h1);
  CHECK(s2.parameters().hash() != h2);
}

TEST_CASE("copy parameters") {
  motiongen::Stage1Model a(tiny_stage1());
  motiongen::Stage1Config other = tiny_stage1();
  other.seed = 99;
  motiongen::Stage1Model b(other);
  CHECK(a.parameters().hash() != b.parameters().hash());
  auto dst = b.parameters();
  copy_parameters(a.parameters(), dst);
  CHECK(a.parameters().hash() == b.parameters().hash());
  motiongen::Stage1Config wide = tiny_stage1();
  wide.denoiser.model_dim = 32;
  motiongen::Stage1Model c(wide);
  auto cd = c.parameters();
  CHECK_THROWS(copy_parameters(a.parameters(), cd));
}

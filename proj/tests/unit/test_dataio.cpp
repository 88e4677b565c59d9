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

using namespace mango;
using namespace mango::dataio;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Byte-compare every file below two directories.
void check_same_tree(const fs::path& a, const fs::path& b) {
  size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    INFO(rel.string());
    REQUIRE(fs::exists(b / rel));
    CHECK(slurp(e.path()) == slurp(b / rel));
    ++n;
  }
  CHECK(n > 4);
}

const DialogueClip& small_clip() {
  static const DialogueClip c = synth_clip(3, 40);
  return c;
}

}  // namespace

TEST_CASE("clip save, load, save is byte identical") {
  const auto dir = test::scratch("clip_rt");
  save_clip(small_clip(), dir / "a");
  const DialogueClip back = load_clip(dir / "a");
  CHECK(back.frame_count() == 40);
  CHECK(back.frames.size() == 40);
  CHECK(back.indicator.bits == small_clip().indicator.bits);
  save_clip(back, dir / "b");
  check_same_tree(dir / "a", dir / "b");
}

TEST_CASE("corrupt clips are rejected") {
  const auto dir = test::scratch("clip_bad");
  save_clip(small_clip(), dir / "c");
  SUBCASE("truncated motion") {
    const std::string bytes = slurp(dir / "c" / "motion.f32");
    std::ofstream(dir / "c" / "motion.f32", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
    CHECK_THROWS_AS(load_clip(dir / "c"), ValidationError);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir / "c" / "manifest.json");
    CHECK_THROWS_AS(load_clip(dir / "c"), FormatError);
  }
  SUBCASE("indicator of the wrong length") {
    std::ofstream(dir / "c" / "indicator.bin", std::ios::binary) << std::string(39, '\0');
    CHECK_THROWS_AS(load_clip(dir / "c"), ValidationError);
  }
  SUBCASE("in-memory validation") {
    DialogueClip c = small_clip();
    c.indicator.bits.pop_back();
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_clip();
    c.indicator.bits[0] = 2;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_clip();
    c.audio_self.samples.resize(100);
    CHECK_THROWS_AS(c.validate(), ValidationError);
  }
}

TEST_CASE("dataset manifest checks") {
  DatasetManifest m;
  m.train = {"a", "b"};
  m.val = {"c"};
  m.test = {"d"};
  for (const char* id : {"a", "b", "c", "d"}) m.paths[id] = std::string("clips/") + id;
  m.speakers = {{"a", "s1"}, {"b", "s2"}, {"c", "s3"}, {"d", "s4"}};
  CHECK_NOTHROW(m.validate());
  CHECK(DatasetManifest::from_json(m.to_json()).to_json() == m.to_json());
  DatasetManifest overlap = m;
  overlap.val.push_back("a");
  CHECK_THROWS_AS(overlap.validate(), ValidationError);
  DatasetManifest leak = m;
  leak.speakers["d"] = "s1";
  CHECK_THROWS_AS(leak.validate(), ValidationError);
}

TEST_CASE("synthetic dataset round trip") {
  const auto dir = test::scratch("dataset");
  SynthDatasetOptions o;
  o.clips = 4;
  o.seconds = 1.0;
  o.val = 1;
  o.test = 1;
  o.clip.render_frames = false;
  const DatasetManifest m = synth_dataset(dir, 5, o);
  CHECK(m.train.size() == 2);
  CHECK_NOTHROW(m.validate());
  const auto train = load_split(dir, "train");
  REQUIRE(train.size() == 2);
  CHECK(train[0].frame_count() == 25);
  CHECK_THROWS_AS(load_split(dir, "bogus"), ArgumentError);
  CHECK(load_manifest(dir).to_json() == m.to_json());
}

TEST_CASE("flip count") {
  CHECK(flip_count(0.0, 100) == 0);
  CHECK(flip_count(0.3, 100) == 30);
  CHECK(flip_count(0.05, 250) == 13);  // ceil(12.5)
  CHECK(flip_count(1.0, 7) == 7);
  CHECK(flip_count(0.01, 7) == 1);
  for (int k = 0; k <= 20; ++k)
    for (Index len : {1, 17, 250, 251}) {
      const double a = k / 20.0;
      const double exact = a * static_cast<double>(len);
      const Index n = flip_count(a, len);
      CHECK(n >= exact - 1e-9);
      CHECK(n < exact + 1.0);
    }
  CHECK_THROWS_AS(flip_count(-0.1, 10), ArgumentError);
  CHECK_THROWS_AS(flip_count(1.5, 10), ArgumentError);
}

TEST_CASE("indicator perturbation") {
  audio::IndicatorTrack ind;
  for (int t = 0; t < 250; ++t) ind.bits.push_back((t / 30) % 2);
  CHECK(perturb_indicator(ind, 0.0, 1).bits == ind.bits);
  const auto all = perturb_indicator(ind, 1.0, 1);
  for (size_t t = 0; t < ind.size(); ++t) CHECK(all.bits[t] == (ind.bits[t] ^ 1));
  for (double a : {0.05, 0.3, 0.55}) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const auto p = perturb_indicator(ind, a, seed);
      // flips form one contiguous run of the expected length
      std::vector<size_t> diff;
      for (size_t t = 0; t < ind.size(); ++t)
        if (p.bits[t] != ind.bits[t]) diff.push_back(t);
      REQUIRE(static_cast<Index>(diff.size()) == flip_count(a, 250));
      CHECK(diff.back() - diff.front() + 1 == diff.size());
      CHECK(p.bits == perturb_indicator(ind, a, seed).bits);
      // xor of the same segment twice is the identity
      audio::IndicatorTrack twice = p;
      for (size_t t : diff) twice.bits[t] ^= 1;
      CHECK(twice.bits == ind.bits);
    }
  }
  const auto g = alpha_grid();
  REQUIRE(g.size() == 21);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 1.0);
  CHECK(g[6] == doctest::Approx(0.3));
}

TEST_CASE("synthetic generator properties") {
  const auto& model = desk_model();
  SynthOptions opt;
  opt.render_frames = false;
  for (uint64_t seed : {11, 12, 13}) {
    const DialogueClip c = synth_clip(seed, 250, model, opt);
    CHECK_NOTHROW(c.validate());
    int transitions = 0;
    for (size_t t = 1; t < c.indicator.size(); ++t) transitions += c.indicator.bits[t] != c.indicator.bits[t - 1];
    CHECK(transitions >= 2);

    const Mat verts = morphable::decode_sequence(model, c.beta, c.motion, true);
    const auto topo = metrics::MeshTopology::from_model(model, c.beta);
    const Vec open = metrics::lip_opening_curve(verts, topo);
    const Vec rms = audio::frame_rms(c.audio_self, 250);
    std::vector<double> so, se;
    std::vector<double> listen;
    for (Index t = 0; t < 250; ++t) {
      if (c.indicator.bits[static_cast<size_t>(t)]) {
        so.push_back(open(t));
        se.push_back(rms(t));
      } else {
        listen.push_back(open(t));
      }
    }
    const Vec vo = Eigen::Map<Vec>(so.data(), static_cast<Index>(so.size()));
    const Vec ve = Eigen::Map<Vec>(se.data(), static_cast<Index>(se.size()));
    CHECK(metrics::pearson(vo, ve).value >= 0.8);
    const double lo = open.minCoeff(), range = open.maxCoeff() - lo;
    size_t quiet = 0;
    for (double v : listen) quiet += (v - lo) <= 0.05 * range;
    CHECK(static_cast<double>(quiet) >= 0.9 * static_cast<double>(listen.size()));

    const DialogueClip r = synth_clip(seed, 250, model, opt);
    CHECK(r.motion == c.motion);
    CHECK(r.audio_self.samples == c.audio_self.samples);
  }
}

TEST_CASE("annotated and projected lip curves agree") {
  const auto& model = desk_model();
  SynthOptions opt;
  opt.render_frames = false;
  const DialogueClip c = synth_clip(21, 250, model, opt);
  const metrics::LipCurve a = metrics::lip_curve_annotated(synth_lip_annotations(c, model));
  const metrics::LipCurve p =
      metrics::lip_curve_projected(morphable::decode_sequence(model, c.beta, c.motion, false), model, c.camera);
  CHECK(metrics::pearson(a.values, p.values).value > 0.95);
}

TEST_CASE("rendered synthetic frames") {
  const DialogueClip& c = small_clip();
  REQUIRE(c.frames.size() == 40);
  CHECK(c.frames[0].width == 128);
  CHECK(c.frames[0].height == 128);
  const Mat& px = c.frames[10].pixels;
  CHECK(px.minCoeff() >= 0.0);
  CHECK(px.maxCoeff() <= 1.0);
  CHECK(px.maxCoeff() - px.minCoeff() > 0.2);
  CHECK_THROWS_AS(synth_clip(1, 10), ArgumentError);
}

// Copyright 2026 The MAM Speech Authors.
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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "mam/error.hpp"
#include "mam/pipeline.hpp"
#include "mam/synth.hpp"

namespace {

using namespace mam;
using synth::SynthConfig;

SynthConfig small(std::size_t n = 6) {
  SynthConfig c;
  c.utterances = n;
  c.min_seconds = 0.6;
  c.max_seconds = 0.9;
  return c;
}

bool same_waves(const synth::SynthCorpus& a, const synth::SynthCorpus& b) {
  if (a.waves.size() != b.waves.size()) return false;
  for (std::size_t i = 0; i < a.waves.size(); ++i)
    if (a.waves[i].samples != b.waves[i].samples) return false;
  return true;
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth::synthesize(small());
  const auto b = synth::synthesize(small());
  EXPECT_TRUE(same_waves(a, b));
  EXPECT_EQ(a.frame_labels.labels, b.frame_labels.labels);
  EXPECT_EQ(a.speaker_labels.labels, b.speaker_labels.labels);
  auto other = small();
  other.seed = 1;
  EXPECT_FALSE(same_waves(a, synth::synthesize(other)));
}

TEST(Synth, LongerCorpusExtendsShorterOne) {
  const auto a = synth::synthesize(small(3));
  const auto b = synth::synthesize(small(6));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.ids[i], b.ids[i]);
    EXPECT_EQ(a.waves[i].samples, b.waves[i].samples);
  }
}

TEST(Synth, LabelsMatchFeatureFramesAndSegments) {
  auto cfg = small(8);
  const auto c = synth::synthesize(cfg);
  ASSERT_EQ(c.ids.size(), 8u);
  for (std::size_t i = 0; i < c.ids.size(); ++i) {
    const auto& w = c.waves[i];
    const double secs = static_cast<double>(w.samples.size()) / w.sample_rate;
    EXPECT_GE(secs, cfg.min_seconds - 1e-3);
    EXPECT_LE(secs, cfg.max_seconds + 1e-3);
    for (float s : w.samples) ASSERT_LE(std::abs(s), 1.0f);

    const auto f = pipeline::compute_features(w, {}, features::FeatureKind::mel, c.ids[i]);
    const auto& y = c.frame_labels.labels.at(c.ids[i]);
    ASSERT_EQ(y.size(), f.num_frames);
    // interior runs keep their drawn length and neighbours never repeat
    std::vector<std::size_t> runs{1};
    for (std::size_t t = 1; t < y.size(); ++t) {
      ASSERT_GE(y[t], 0);
      ASSERT_LT(y[t], cfg.phones);
      if (y[t] == y[t - 1]) ++runs.back(); else runs.push_back(1);
    }
    for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
      EXPECT_GE(runs[r], static_cast<std::size_t>(cfg.min_segment_frames));
      EXPECT_LE(runs[r], static_cast<std::size_t>(cfg.max_segment_frames));
    }
    const int spk = c.speaker_labels.labels.at(c.ids[i]);
    EXPECT_GE(spk, 0);
    EXPECT_LT(spk, cfg.speakers);
  }
  EXPECT_EQ(c.frame_labels.num_classes, cfg.phones);
  EXPECT_EQ(c.speaker_labels.num_classes, cfg.speakers);
}

TEST(Synth, RejectsBadConfig) {
  auto c = small();
  c.phones = 1;
  EXPECT_THROW(synth::synthesize(c), ContractError);
  c = small();
  c.max_segment_frames = c.min_segment_frames - 1;
  EXPECT_THROW(synth::synthesize(c), ContractError);
  c = small();
  c.transition_frames = -1;
  EXPECT_THROW(synth::synthesize(c), ContractError);
  c = small();
  c.formant_offset_hz = -5;
  EXPECT_THROW(synth::synthesize(c), ContractError);
  c = small();
  c.f0_max = 5000;
  EXPECT_THROW(synth::synthesize(c), ContractError);
}

TEST(Synth, TransitionOnlyTouchesLaterSegmentOnsets) {
  auto cfg = small(2);
  const auto plain = synth::synthesize(cfg);
  cfg.transition_frames = 6;
  const auto glide = synth::synthesize(cfg);
  EXPECT_EQ(plain.frame_labels.labels, glide.frame_labels.labels);
  const auto& a = plain.waves[0].samples;
  const auto& b = glide.waves[0].samples;
  ASSERT_EQ(a.size(), b.size());
  // the first segment has no predecessor
  const auto& y = plain.frame_labels.labels.at(plain.ids[0]);
  std::size_t first_change = 1;
  while (y[first_change] == y[0]) ++first_change;
  const std::size_t safe = first_change * 160;
  for (std::size_t i = 0; i < safe && i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << i;
  EXPECT_NE(a, b);
}

TEST(Synth, FormantOffsetKeepsLabelsAndDefaults) {
  auto cfg = small(4);
  cfg.speakers = 3;
  const auto plain = synth::synthesize(cfg);
  cfg.formant_offset_hz = 0.0;
  EXPECT_TRUE(same_waves(plain, synth::synthesize(cfg)));
  cfg.formant_offset_hz = 300.0;
  const auto shifted = synth::synthesize(cfg);
  EXPECT_EQ(plain.frame_labels.labels, shifted.frame_labels.labels);
  EXPECT_EQ(plain.speaker_labels.labels, shifted.speaker_labels.labels);
  EXPECT_FALSE(same_waves(plain, shifted));
}

}  // namespace

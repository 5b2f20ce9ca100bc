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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "mam/error.hpp"
#include "mam/probes.hpp"
#include "mam/repr.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mam;
using namespace mam::probes;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mam_probes_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor<float> matrix(std::size_t t, std::size_t d, std::mt19937_64& rng, float scale = 1.0f) {
  Tensor<float> m({t, d});
  std::normal_distribution<float> n(0.0f, scale);
  for (auto& v : m.data()) v = n(rng);
  return m;
}

// Class k frames sit near 3·e_k; every frame of an utterance is labelled.
ProbeDataset separable_frames(std::size_t utts, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  ProbeDataset data;
  for (std::size_t u = 0; u < utts; ++u) {
    ProbeUtterance pu;
    pu.id = "u" + std::to_string(u);
    auto m = matrix(20, classes + 2, rng, 0.3f);
    for (std::size_t t = 0; t < 20; ++t) {
      const int k = cls(rng);
      m[t * (classes + 2) + static_cast<std::size_t>(k)] += 3.0f;
      pu.frame_labels.push_back(k);
    }
    pu.layers.push_back(m);
    data.push_back(std::move(pu));
  }
  return data;
}

TEST(Accuracy, SimpleCases) {
  const std::vector<int> y{0, 1, 2, 3};
  EXPECT_EQ(evaluate_accuracy(y, y), 1.0);
  EXPECT_EQ(evaluate_accuracy(std::vector<int>{1, 2, 3, 0}, y), 0.0);
  EXPECT_EQ(evaluate_accuracy(std::vector<int>{0, 1, 2, 0}, y), 0.75);
  EXPECT_THROW(evaluate_accuracy(std::vector<int>{0}, y), DimensionError);
  EXPECT_THROW(evaluate_accuracy(std::vector<int>{}, std::vector<int>{}), ContractError);
}

TEST(Labels, MajorityAlignment) {
  const std::vector<int> raw{1, 1, 2, 3, 3, 2, 0, 5, -1, 4};
  EXPECT_EQ(align_frame_labels(raw, 1, 10), raw);
  // steps: {1,1,2} {3,3,2} {0,5,-1} {4,pad,pad}
  EXPECT_EQ(align_frame_labels(raw, 3, 4), (std::vector<int>{1, 3, 0, 4}));
  EXPECT_EQ(align_frame_labels(std::vector<int>{-1, -1}, 2, 2), (std::vector<int>{-1, -1}));
}

TEST(Labels, CsvRoundTrip) {
  const auto dir = scratch("csv");
  FrameLabelSet f;
  f.labels["a"] = {0, 2, 2, 1};
  f.labels["b"] = {3};
  f.num_classes = 4;
  write_frame_labels(dir / "f.csv", f);
  const auto fr = read_frame_labels(dir / "f.csv");
  EXPECT_EQ(fr.labels, f.labels);
  EXPECT_EQ(fr.num_classes, 4);
  EXPECT_THROW(read_frame_labels(dir / "f.csv", 3), FormatError);

  UtteranceLabelSet u;
  u.labels["a"] = 1;
  u.labels["b"] = 0;
  u.num_classes = 2;
  write_utterance_labels(dir / "u.csv", u);
  const auto ur = read_utterance_labels(dir / "u.csv");
  EXPECT_EQ(ur.labels, u.labels);
  EXPECT_EQ(ur.num_classes, 2);

  std::ofstream(dir / "gap.csv") << "utterance_id,frame_index,class_id\nz,0,1\nz,2,0\n";
  EXPECT_EQ(read_frame_labels(dir / "gap.csv").labels.at("z"), (std::vector<int>{1, -1, 0}));
}

TEST(Splits, DisjointCoveringAndSeeded) {
  const auto s = split_utterances(50, 0.1, 0.1, 3);
  EXPECT_EQ(s.test.size(), 5u);
  EXPECT_EQ(s.valid.size(), 5u);
  EXPECT_EQ(s.train.size(), 40u);
  std::set<std::size_t> all;
  for (const auto* v : {&s.train, &s.valid, &s.test}) all.insert(v->begin(), v->end());
  EXPECT_EQ(all.size(), 50u);
  const auto again = split_utterances(50, 0.1, 0.1, 3);
  EXPECT_EQ(again.test, s.test);
  EXPECT_NE(split_utterances(50, 0.1, 0.1, 4).test, s.test);
}

TEST(Splits, StratifiedKeepsEveryClassInTraining) {
  std::vector<int> labels(20, 0);
  labels[7] = 1;
  labels[13] = 1;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = split_stratified(labels, 0.5, 0.0, seed);
    std::set<int> in_train;
    for (auto i : s.train) in_train.insert(labels[i]);
    EXPECT_EQ(in_train, (std::set<int>{0, 1})) << "seed " << seed;
  }
}

TEST(Budgets, CountsAndNesting) {
  EXPECT_EQ(budget_count(1000, 1.0), 1000u);
  EXPECT_EQ(budget_count(1000, 0.001), 1u);
  EXPECT_EQ(budget_count(10, 0.001), 1u);
  std::vector<std::size_t> pool(1000);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> prev;
  for (double b : {0.001, 0.01, 0.1, 1.0}) {
    const auto s = budget_subset(pool, b, 7);
    EXPECT_EQ(s.size(), budget_count(1000, b));
    EXPECT_TRUE(std::includes(s.begin(), s.end(), prev.begin(), prev.end()));
    prev = s;
  }
  EXPECT_THROW(budget_subset(pool, 0.0, 1), ContractError);
  EXPECT_THROW(budget_subset(pool, 1.5, 1), ContractError);
  EXPECT_THROW(budget_subset(std::vector<std::size_t>{}, 0.5, 1), ContractError);
}

TEST(FrameProbe, SeparableClassesAreLearned) {
  const auto data = separable_frames(40, 4, 1);
  const auto split = split_utterances(data.size(), 0.1, 0.1, 1);
  ProbeConfig cfg;
  cfg.lr = 1e-2;
  const auto r = train_linear_frame_probe(data, split, 1.0, 4, cfg, "mel");
  EXPECT_GT(r.accuracy, 0.95);
  EXPECT_EQ(r.labeled_utterances, split.train.size());
  EXPECT_EQ(r.labeled_frames, split.train.size() * 20);
  const auto again = train_linear_frame_probe(data, split, 1.0, 4, cfg, "mel");
  EXPECT_EQ(again.accuracy, r.accuracy);
  EXPECT_EQ(again.epochs, r.epochs);
}

TEST(FrameProbe, RandomLabelsStayNearChance) {
  auto data = separable_frames(60, 4, 2);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  for (auto& u : data)
    for (auto& y : u.frame_labels) y = cls(rng);
  const auto split = split_utterances(data.size(), 0.2, 0.1, 2);
  const auto r = train_linear_frame_probe(data, split, 1.0, 4, ProbeConfig{}, "mel");
  const double n = static_cast<double>(split.test.size() * 20);
  EXPECT_NEAR(r.accuracy, 0.25, 3.0 * std::sqrt(0.25 * 0.75 / n));
}

TEST(FrameProbe, SweepIsNestedAndMonotone) {
  const auto data = separable_frames(60, 4, 4);
  const auto split = split_utterances(data.size(), 0.1, 0.1, 4);
  const std::vector<double> budgets{0.001, 0.01, 0.1, 1.0};
  ProbeConfig cfg;
  cfg.lr = 1e-2;
  const auto reports = low_resource_sweep(data, split, budgets, 4, cfg, "mel");
  ASSERT_EQ(reports.size(), 4u);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    EXPECT_GE(reports[i].labeled_utterances, reports[i - 1].labeled_utterances);
    EXPECT_GE(reports[i].labeled_frames, reports[i - 1].labeled_frames);
  }
  EXPECT_GE(reports.back().accuracy, reports.front().accuracy - 0.02);
  EXPECT_THROW(low_resource_sweep(data, split, std::vector<double>{0.5, 0.1}, 4, cfg, "mel"), ContractError);

  const auto dir = scratch("sweep");
  append_reports_csv(dir / "r.csv", reports);
  append_reports_csv(dir / "r.csv", reports);
  write_sweep_table(dir / "s.csv", reports);
  std::ifstream f(dir / "r.csv");
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "input_kind,task,budget,accuracy,seed");
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  EXPECT_EQ(rows, 8);
}

TEST(UtteranceProbe, OffsetSpeakersAreSeparated) {
  std::mt19937_64 rng(5);
  ProbeDataset data;
  std::uniform_int_distribution<std::size_t> len(8, 20);
  for (int u = 0; u < 60; ++u) {
    ProbeUtterance pu;
    pu.id = "s" + std::to_string(u);
    pu.label = u % 2;
    auto m = matrix(len(rng), 4, rng);
    for (auto& v : m.data()) v += pu.label == 0 ? -3.0f : 3.0f;
    pu.layers.push_back(m);
    data.push_back(std::move(pu));
  }
  ProbeConfig cfg;
  cfg.rnn_hidden = 32;
  cfg.test_fraction = 0.2;
  const auto r = train_rnn_utterance_probe(data, 2, cfg, "mel");
  EXPECT_GT(r.accuracy, 0.95);
  cfg.readout = Readout::mean;
  EXPECT_GT(train_rnn_utterance_probe(data, 2, cfg, "mel").accuracy, 0.95);
}

TEST(UtteranceProbe, SingleClassIsRejected) {
  std::mt19937_64 rng(6);
  ProbeDataset data;
  for (int u = 0; u < 10; ++u) {
    ProbeUtterance pu;
    pu.id = "s" + std::to_string(u);
    pu.label = 0;
    pu.layers.push_back(matrix(5, 3, rng));
    data.push_back(std::move(pu));
  }
  EXPECT_THROW(train_rnn_utterance_probe(data, 1, ProbeConfig{}, "mel"), ContractError);
}

TEST(Mixer, UniformSaturatedAndZeroGamma) {
  std::mt19937_64 rng(7);
  repr::RepresentationStack<double> stack;
  for (int l = 0; l < 3; ++l) {
    Tensor<double> m({4, 5});
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& v : m.data()) v = n(rng);
    stack.push_back(m);
  }
  const repr::RepresentationStack<double> two{stack[0], stack[1]};
  const auto mean = repr::mix(two, repr::WeightedSumMixer<double>(2));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(mean[i], 0.5 * (stack[0][i] + stack[1][i]), 1e-12);

  const auto sat = repr::mix(stack, repr::WeightedSumMixer<double>({-20.0, -20.0, 20.0}, 1.0));
  const auto last = repr::extract_last(stack);
  EXPECT_TRUE(last.same_storage(stack.back()));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(sat[i], last[i], 1e-4);

  const auto zero = repr::mix(stack, repr::WeightedSumMixer<double>({0.3, 0.1, -2.0}, 0.0));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(repr::mix(two, repr::WeightedSumMixer<double>(3)), DimensionError);
  EXPECT_THROW(repr::extract_last(repr::RepresentationStack<double>{}), ContractError);

  const auto w = repr::WeightedSumMixer<double>({1.0, 2.0, 3.0}, 1.0).weights();
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
  EXPECT_NEAR(w[2] / w[1], std::exp(1.0), 1e-9);
}

TEST(Mixer, TimePermutationEquivariant) {
  std::mt19937_64 rng(8);
  repr::RepresentationStack<float> stack{matrix(6, 3, rng), matrix(6, 3, rng)};
  repr::RepresentationStack<float> perm;
  const std::vector<std::size_t> order{3, 0, 5, 1, 4, 2};
  for (const auto& l : stack) {
    Tensor<float> p({6, 3});
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t d = 0; d < 3; ++d) p[t * 3 + d] = l[order[t] * 3 + d];
    perm.push_back(p);
  }
  const repr::WeightedSumMixer<float> mixer({0.2f, -0.4f}, 1.3f);
  const auto a = repr::mix(stack, mixer);
  const auto b = repr::mix(perm, mixer);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(b[t * 3 + d], a[order[t] * 3 + d]);
}

TEST(Mixer, TrainedWithProbeStaysNormalized) {
  // layer 1 carries the class, layer 0 is noise
  auto clean = separable_frames(30, 3, 9);
  std::mt19937_64 rng(10);
  for (auto& u : clean) {
    auto noise = matrix(u.steps(), u.dim(), rng, 2.0f);
    u.layers.insert(u.layers.begin(), noise);
  }
  const auto split = split_utterances(clean.size(), 0.1, 0.1, 2);
  ProbeConfig cfg;
  cfg.lr = 1e-2;
  const auto r = train_linear_frame_probe(clean, split, 1.0, 3, cfg, "repr-weighted");
  ASSERT_EQ(r.mixer_weights.size(), 2u);
  EXPECT_NEAR(r.mixer_weights[0] + r.mixer_weights[1], 1.0, 1e-6);
  EXPECT_GT(r.mixer_weights[1], r.mixer_weights[0]);
  EXPECT_GT(r.accuracy, 0.9);
}

}  // namespace

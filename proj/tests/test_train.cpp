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
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mam/checkpoint.hpp"
#include "mam/error.hpp"
#include "mam/optim.hpp"
#include "mam/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mam;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mam_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

model::EncoderConfig micro() {
  model::EncoderConfig c;
  c.hidden_dim = 16;
  c.ff_dim = 32;
  c.heads = 2;
  c.layers = 2;
  c.input_dim = 6;
  c.target_dim = 6;
  c.consecutive = 3;
  c.max_steps = 64;
  return c;
}

train::Corpus random_corpus(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_int_distribution<std::size_t> len(10, 30);
  train::Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    features::FeatureSequence s;
    s.utterance_id = "u" + std::to_string(i);
    s.num_frames = len(rng);
    s.dim = dim;
    // smooth in time so there is something to learn
    std::vector<float> base(dim);
    for (auto& b : base) b = g(rng);
    for (std::size_t t = 0; t < s.num_frames; ++t)
      for (std::size_t d = 0; d < dim; ++d) s.frames.push_back(base[d] + 0.1f * g(rng));
    c.inputs.push_back(std::move(s));
  }
  return c;
}

train::PretrainOptions micro_options(std::uint64_t steps) {
  train::PretrainOptions o;
  o.encoder = micro();
  o.policy.consecutive = 3;
  o.schedule.total_steps = steps;
  o.schedule.batch_size = 3;
  o.schedule.peak_lr = 1e-3;
  o.seed = 5;
  return o;
}

TEST(Schedule, PublishedWarmupPeakAndEndpoints) {
  const optim::TrainSchedule s;
  EXPECT_EQ(s.warmup_steps(), 35000u);
  EXPECT_EQ(optim::lr_at(35000, s), 4e-4);
  EXPECT_EQ(optim::lr_at(0, s), 0.0);
  EXPECT_EQ(optim::lr_at(500000, s), 0.0);
  EXPECT_NEAR(optim::lr_at(17500, s), 2e-4, 1e-18);
  EXPECT_NEAR(optim::lr_at(267500, s), 2e-4, 1e-15);
  EXPECT_THROW(optim::lr_at(500001, s), ContractError);
  double max_lr = 0;
  std::uint64_t arg = 0;
  for (std::uint64_t t = 0; t <= 500000; t += 250) {
    const double v = optim::lr_at(t, s);
    if (v > max_lr) {
      max_lr = v;
      arg = t;
    }
  }
  EXPECT_EQ(arg, 35000u);
  EXPECT_EQ(optim::TrainSchedule::finetuning().peak_lr, 4e-3);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor<float> w({3}, {1.0f, -2.0f, 0.5f});
  w.mutable_grad();
  optim::AdamState st;
  const std::vector<optim::ParamRef> refs{{"w", &w, 1.0}};
  optim::adam_step(refs, st, 0.1);
  EXPECT_EQ(w[0], 1.0f);
  EXPECT_EQ(w[1], -2.0f);
  EXPECT_EQ(w[2], 0.5f);
}

TEST(Adam, FirstStepMovesByLrAgainstSign) {
  Tensor<float> w({3}, {1.0f, 1.0f, 1.0f});
  auto g = w.mutable_grad();
  g[0] = 0.3f;
  g[1] = -5.0f;
  g[2] = 1e-3f;
  optim::AdamState st;
  const std::vector<optim::ParamRef> refs{{"w", &w, 1.0}};
  optim::adam_step(refs, st, 0.01);
  EXPECT_NEAR(w[0], 0.99f, 1e-6);
  EXPECT_NEAR(w[1], 1.01f, 1e-6);
  EXPECT_NEAR(w[2], 0.99f, 1e-5);
}

TEST(Adam, MatchesScalarHandTrace) {
  // reference recursion written out in double
  const std::vector<double> grads{0.5, -0.2, 0.1, 0.0, 0.7};
  double x = 1.0, m = 0, v = 0;
  Tensor<float> w({1}, {1.0f});
  optim::AdamState st;
  const std::vector<optim::ParamRef> refs{{"w", &w, 1.0}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    w.mutable_grad()[0] = static_cast<float>(g);
    optim::adam_step(refs, st, 0.05);
    EXPECT_NEAR(w[0], x, 1e-6) << "step " << t;
  }
  EXPECT_EQ(st.step, grads.size());
}

TEST(Adam, ZeroScaleFreezesAndNanAborts) {
  Tensor<float> a({1}, {1.0f}), b({1}, {1.0f});
  a.mutable_grad()[0] = 1.0f;
  b.mutable_grad()[0] = 1.0f;
  optim::AdamState st;
  const std::vector<optim::ParamRef> refs{{"a", &a, 0.0}, {"b", &b, 1.0}};
  optim::adam_step(refs, st, 0.1);
  EXPECT_EQ(a[0], 1.0f);
  EXPECT_NE(b[0], 1.0f);
  b.mutable_grad()[0] = std::nanf("");
  const float before = b[0];
  try {
    optim::adam_step(refs, st, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(b[0], before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Clip, RescalesToMaxNorm) {
  Tensor<float> a({2}, 0.0f), b({1}, 0.0f);
  a.mutable_grad()[0] = 3.0f;
  a.mutable_grad()[1] = 0.0f;
  b.mutable_grad()[0] = 4.0f;
  const std::vector<optim::ParamRef> refs{{"a", &a, 1.0}, {"b", &b, 1.0}};
  EXPECT_NEAR(optim::grad_norm(refs), 5.0, 1e-9);
  EXPECT_NEAR(optim::clip_grad_norm(refs, 1.0), 5.0, 1e-9);
  EXPECT_NEAR(a.grad()[0], 0.6f, 1e-6);
  EXPECT_NEAR(b.grad()[0], 0.8f, 1e-6);
  EXPECT_NEAR(optim::clip_grad_norm(refs, 0.0), 1.0, 1e-6);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = scratch("ckpt");
  checkpoint::Checkpoint c;
  c.step = 42;
  c.add(checkpoint::NamedTensor::floats("a.w", {2, 3}, {1, 2, 3, 4, 5, std::nextafter(6.0f, 7.0f)}));
  c.add(checkpoint::NamedTensor::integers("meta", {7, -1, 1LL << 40}));
  checkpoint::save_checkpoint(c, dir / "x.mamc");
  EXPECT_FALSE(fs::exists(dir / "x.mamc.tmp"));
  const auto r = checkpoint::load_checkpoint(dir / "x.mamc");
  EXPECT_EQ(r.step, 42u);
  EXPECT_EQ(r.get("a.w").shape, (Shape{2, 3}));
  EXPECT_EQ(r.get("a.w").f32, c.get("a.w").f32);
  EXPECT_EQ(r.get("meta").i64, c.get("meta").i64);
  EXPECT_THROW(r.get("nope"), FormatError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto dir = scratch("corrupt");
  checkpoint::Checkpoint c;
  c.add(checkpoint::NamedTensor::floats("w", {64}, std::vector<float>(64, 0.5f)));
  checkpoint::save_checkpoint(c, dir / "ok.mamc");
  const auto size = fs::file_size(dir / "ok.mamc");

  fs::copy_file(dir / "ok.mamc", dir / "flip.mamc");
  {
    std::fstream f(dir / "flip.mamc", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size - 10));
    f.put('\x7f');
  }
  try {
    checkpoint::load_checkpoint(dir / "flip.mamc");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }

  fs::copy_file(dir / "ok.mamc", dir / "short.mamc");
  fs::resize_file(dir / "short.mamc", size - 4);
  EXPECT_THROW(checkpoint::load_checkpoint(dir / "short.mamc"), FormatError);

  fs::copy_file(dir / "ok.mamc", dir / "version.mamc");
  {
    std::fstream f(dir / "version.mamc", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put('\x09');
  }
  EXPECT_THROW(checkpoint::load_checkpoint(dir / "version.mamc"), FormatError);
  EXPECT_THROW(checkpoint::load_checkpoint(dir / "missing.mamc"), IoError);
}

TEST(Checkpoint, CrcMatchesKnownValue) {
  const char* s = "123456789";
  EXPECT_EQ(checkpoint::crc32(s, 9), 0xCBF43926u);
}

TEST(Checkpoint, ModelRoundTripAndConfig) {
  const auto dir = scratch("model");
  model::Model<float> m(micro(), 3);
  checkpoint::save_checkpoint(train::to_checkpoint(m, nullptr, 7), dir / "m.mamc");
  const auto back = train::load_model(dir / "m.mamc");
  EXPECT_EQ(back.config(), m.config());
  EXPECT_TRUE(back.has_head());
  for (const auto& [name, p] : m.parameters()) {
    const auto& q = back.param(name);
    for (std::size_t i = 0; i < p.numel(); ++i) ASSERT_EQ(p[i], q[i]) << name;
  }
}

TEST(Checkpoint, BaseIntoLargeNamesTheTensor) {
  const auto dir = scratch("base_large");
  {
    model::Model<float> base(model::EncoderConfig::base(), 1);
    checkpoint::save_checkpoint(train::to_checkpoint(base, nullptr, 0), dir / "base.mamc");
  }
  const auto ck = checkpoint::load_checkpoint(dir / "base.mamc");
  model::Model<float> large(model::EncoderConfig::large(), 1);
  try {
    train::load_into(large, ck, nullptr);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    // the message names a tensor whose shapes really differ
    const std::string msg = e.what();
    const auto a = msg.find('\''), b = msg.find('\'', a + 1);
    ASSERT_NE(b, std::string::npos) << msg;
    const std::string name = msg.substr(a + 1, b - a - 1);
    ASSERT_TRUE(large.parameters().contains(name)) << msg;
    EXPECT_NE(large.param(name).shape(), ck.get(name).shape) << msg;
  }
}

TEST(Buckets, SortedByLengthAndCoverEverything) {
  const auto c = random_corpus(10, 4, 1);
  const auto b = train::make_buckets(c.inputs, 3);
  ASSERT_EQ(b.size(), 4u);
  std::vector<int> seen(10, 0);
  std::size_t prev = 0;
  for (const auto& bucket : b)
    for (auto i : bucket) {
      ++seen[i];
      EXPECT_GE(c.inputs[i].num_frames, prev);
      prev = c.inputs[i].num_frames;
    }
  for (int s : seen) EXPECT_EQ(s, 1);
  auto o = train::epoch_order(4, 9, 0);
  std::sort(o.begin(), o.end());
  EXPECT_EQ(o, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(train::epoch_order(4, 9, 3), train::epoch_order(4, 9, 3));
}

TEST(Pretrain, DeterministicAndDecreasing) {
  const auto c = random_corpus(9, 6, 2);
  const auto o = micro_options(120);
  const auto a = train::pretrain(c, o);
  const auto b = train::pretrain(c, o);
  ASSERT_EQ(a.log.size(), 120u);
  EXPECT_EQ(a.log, b.log);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += a.log[i].loss;
    last += a.log[a.log.size() - 1 - i].loss;
    EXPECT_TRUE(std::isfinite(a.log[i].grad_norm));
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(a.log.front().lr, optim::lr_at(1, o.schedule));
}

TEST(Pretrain, ResumeMatchesUninterruptedRun) {
  const auto dir = scratch("resume");
  const auto c = random_corpus(9, 6, 3);
  auto o = micro_options(40);
  const auto full = train::pretrain(c, o);
  o.out_dir = dir;
  o.stop_after = 17;
  o.checkpoint_every = 5;
  train::pretrain(c, o);
  EXPECT_TRUE(fs::exists(dir / "step-00000015.mamc"));
  EXPECT_TRUE(fs::exists(dir / "last.mamc"));
  o.stop_after = 0;
  o.resume_from = train::last_checkpoint_path(dir);
  const auto resumed = train::pretrain(c, o);
  EXPECT_EQ(resumed.log, full.log);
  for (const auto& [name, p] : full.model.parameters()) {
    const auto& q = resumed.model.param(name);
    for (std::size_t i = 0; i < p.numel(); ++i) ASSERT_EQ(p[i], q[i]) << name;
  }
  std::ifstream csv(dir / "loss.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,lr,loss,grad_norm");
}

TEST(Pretrain, RejectsEmptyOrMismatchedCorpus) {
  train::Corpus empty;
  EXPECT_THROW(train::pretrain(empty, micro_options(5)), ContractError);
  auto c = random_corpus(3, 5, 4);
  EXPECT_THROW(train::pretrain(c, micro_options(5)), DimensionError);
}

TEST(Finetune, StepCountAndFrozenEncoder) {
  EXPECT_EQ(train::finetune_steps(25, 6, 2), 10u);
  EXPECT_EQ(train::finetune_steps(150000, 6, 2), 50000u);

  const auto c = random_corpus(12, 6, 5);
  std::vector<std::vector<int>> labels;
  for (const auto& s : c.inputs) {
    std::vector<int> l(s.num_frames);
    for (std::size_t t = 0; t < s.num_frames; ++t) l[t] = s.frames[t * 6] > 0 ? 1 : 0;
    labels.push_back(l);
  }
  model::Model<float> m(micro(), 6);
  const auto before = m.param("encoder.layer0.attn.q_w").clone();
  const auto split = probes::split_utterances(12, 0.2, 0.0, 1);
  train::FinetuneOptions opts;
  opts.encoder_lr_scale = 0.0;
  opts.schedule.batch_size = 3;
  const auto r = train::finetune_frames(m, c.inputs, labels, split, 1.0, 2, opts);
  EXPECT_EQ(r.log.size(), train::finetune_steps(split.train.size(), 3, 2));
  const auto& after = m.param("encoder.layer0.attn.q_w");
  for (std::size_t i = 0; i < after.numel(); ++i) ASSERT_EQ(after[i], before[i]);
  EXPECT_GE(r.report.accuracy, 0.0);
  EXPECT_LE(r.report.accuracy, 1.0);

  opts.encoder_lr_scale = 1.0;
  train::finetune_frames(m, c.inputs, labels, split, 1.0, 2, opts);
  bool moved = false;
  for (std::size_t i = 0; i < after.numel(); ++i) moved = moved || after[i] != before[i];
  EXPECT_TRUE(moved);
}

}  // namespace

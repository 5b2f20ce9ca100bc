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


#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "mam/error.hpp"
#include "mam/model.hpp"

namespace {

using namespace mam::model;
using mam::Tensor;
using mam::testing::grad_check;
using mam::testing::random_tensor;
namespace ops = mam::ops;

EncoderConfig small_config() {
  EncoderConfig c;
  c.hidden_dim = 8;
  c.ff_dim = 16;
  c.heads = 2;
  c.layers = 2;
  c.input_dim = 5;
  c.target_dim = 5;
  c.dropout = 0.0;
  c.max_steps = 64;
  return c;
}

// Independent closed form: input projection plus, per layer, four H×H
// attention maps, two norms and the two feed-forward maps.
std::uint64_t expected_count(std::uint64_t in, std::uint64_t h, std::uint64_t f, std::uint64_t layers) {
  const std::uint64_t layer = 4 * (h * h + h) + 2 * h + (h * f + f) + (f * h + h) + 2 * h;
  return in * h + h + layers * layer;
}

TEST(Presets, MatchPublishedSettings) {
  const auto b = EncoderConfig::base();
  EXPECT_EQ(b.hidden_dim, 768u);
  EXPECT_EQ(b.ff_dim, 3072u);
  EXPECT_EQ(b.heads, 12u);
  EXPECT_EQ(b.layers, 3u);
  EXPECT_EQ(b.downsample, 1);
  EXPECT_EQ(b.consecutive, 7);
  EXPECT_EQ(b.target_dim, 160u);
  EXPECT_EQ(b.target_kind, TargetKind::mel);
  const auto l = EncoderConfig::large();
  EXPECT_EQ(l.layers, 12u);
  EXPECT_EQ(l.downsample, 3);
  EXPECT_EQ(l.consecutive, 3);
  EXPECT_EQ(l.input_dim, 480u);
  EXPECT_EQ(l.target_dim, 603u);
  EXPECT_EQ(l.target_kind, TargetKind::linear);
  const auto t = EncoderConfig::tiny();
  EXPECT_EQ(t.hidden_dim, 64u);
  EXPECT_EQ(t.layers, 2u);
  EXPECT_EQ(t.heads, 4u);
  EXPECT_THROW(EncoderConfig::preset("huge"), mam::ContractError);
}

TEST(Presets, ParameterCounts) {
  EXPECT_EQ(count_parameters(EncoderConfig::base()), 21387264u);
  EXPECT_EQ(count_parameters(EncoderConfig::large()), 85423872u);
  EXPECT_EQ(count_parameters(EncoderConfig::base()), expected_count(160, 768, 3072, 3));
  EXPECT_EQ(count_parameters(EncoderConfig::large()), expected_count(480, 768, 3072, 12));
  Model<float> m(EncoderConfig::tiny(), 1);
  EXPECT_EQ(m.encoder_parameter_count(), count_parameters(EncoderConfig::tiny()));
  EXPECT_EQ(m.encoder_parameter_count(), expected_count(160, 64, 256, 2));
}

TEST(Config, RejectsIndivisibleHeads) {
  auto c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), mam::ContractError);
}

TEST(PositionalEncoding, KnownValues) {
  const auto pe = sinusoidal_pe<double>(50, 16);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(pe[i], i % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe[16], std::sin(1.0), 1e-12);
  EXPECT_NEAR(pe[16], 0.8415, 1e-4);
  EXPECT_NEAR(pe[16 + 3], std::cos(1.0 / std::pow(10000.0, 2.0 / 16.0)), 1e-12);
  for (double v : pe.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(sinusoidal_pe<double>(4, 7), mam::ContractError);
}

TEST(Encoder, ShapesAndErrors) {
  const auto cfg = small_config();
  Model<double> m(cfg, 2);
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 6, 5}, rng);
  const auto r = m.encode(x, ops::RowMask(12, 0), false);
  ASSERT_EQ(r.hidden.size(), 2u);
  for (const auto& h : r.hidden) EXPECT_EQ(h.shape(), (mam::Shape{2, 6, 8}));
  EXPECT_EQ(m.predict_frames(r.last()).shape(), (mam::Shape{2, 6, 5}));
  auto bad = random_tensor({2, 6, 4}, rng);
  EXPECT_THROW(m.encode(bad, ops::RowMask(12, 0), false), mam::DimensionError);
  ops::RowMask all_pad(12, 0);
  for (int t = 0; t < 6; ++t) all_pad[6 + t] = 1;
  EXPECT_THROW(m.encode(x, all_pad, false), mam::ContractError);
}

TEST(Encoder, BatchPermutationPermutesOutputs) {
  const auto cfg = small_config();
  Model<double> m(cfg, 4);
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 6, 5}, rng);
  Tensor<double> swapped({2, 6, 5});
  for (std::size_t i = 0; i < 30; ++i) {
    swapped[i] = x[30 + i];
    swapped[30 + i] = x[i];
  }
  ops::RowMask pad(12, 0), pad_sw(12, 0);
  pad[5] = 1;     // item 0 has one padded step
  pad_sw[11] = 1;
  const auto a = m.encode(x, pad, false).last();
  const auto b = m.encode(swapped, pad_sw, false).last();
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(a[t * 8 + d], b[48 + t * 8 + d], 1e-12);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(a[48 + i], b[i], 1e-12);
}

TEST(Encoder, PaddingDoesNotLeakIntoValidSteps) {
  const auto cfg = small_config();
  Model<double> m(cfg, 6);
  std::mt19937_64 rng(7);
  auto x = random_tensor({1, 6, 5}, rng);
  ops::RowMask pad(6, 0);
  pad[4] = pad[5] = 1;
  const auto a = m.encode(x, pad, false).last();
  for (std::size_t i = 20; i < 30; ++i) x[i] += 100.0;
  const auto b = m.encode(x, pad, false).last();
  for (std::size_t i = 0; i < 4 * 8; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Encoder, ZeroedSublayersReduceToLayerNorm) {
  auto cfg = small_config();
  cfg.layers = 1;
  Model<double> m(cfg, 8);
  for (auto& [name, p] : m.parameters()) {
    const bool zero = name.find("attn.v_") != std::string::npos || name.find("attn.out_") != std::string::npos ||
                      name.find("ffn.out_") != std::string::npos;
    if (zero)
      for (auto& v : p.data()) v = 0.0;
  }
  std::mt19937_64 rng(9);
  auto x = random_tensor({1, 5, 5}, rng);
  const auto r = m.encode(x, ops::RowMask(5, 0), false);
  // oracle: standardize each embedding row by hand
  for (std::size_t t = 0; t < 5; ++t) {
    double mu = 0, var = 0;
    for (std::size_t d = 0; d < 8; ++d) mu += r.embedding[t * 8 + d];
    mu /= 8;
    for (std::size_t d = 0; d < 8; ++d) var += std::pow(r.embedding[t * 8 + d] - mu, 2);
    var /= 8;
    for (std::size_t d = 0; d < 8; ++d)
      EXPECT_NEAR(r.last()[t * 8 + d], (r.embedding[t * 8 + d] - mu) / std::sqrt(var), 1e-9);
  }
}

TEST(Encoder, EarlierPositionsSeeLaterFrames) {
  const auto cfg = small_config();
  Model<double> m(cfg, 10);
  std::mt19937_64 rng(11);
  auto x = random_tensor({1, 8, 5}, rng);
  const auto a = m.encode(x, ops::RowMask(8, 0), false).last();
  x[6 * 5 + 2] += 1.0;
  const auto b = m.encode(x, ops::RowMask(8, 0), false).last();
  double diff = 0;
  for (std::size_t i = 0; i < 6 * 8; ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, DropoutZeroIsDeterministic) {
  auto cfg = small_config();
  Model<double> m(cfg, 12);
  std::mt19937_64 rng(13), r1(1), r2(2);
  auto x = random_tensor({1, 6, 5}, rng);
  const auto a = m.encode(x, ops::RowMask(6, 0), true, &r1).last();
  const auto b = m.encode(x, ops::RowMask(6, 0), true, &r2).last();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Head, ZeroWeightsGiveZeroPredictions) {
  const auto cfg = small_config();
  Model<double> m(cfg, 14);
  for (auto& [name, p] : m.parameters())
    if (name.rfind("head.out_", 0) == 0)
      for (auto& v : p.data()) v = 0.0;
  std::mt19937_64 rng(15);
  const auto y = m.predict_frames(m.encode(random_tensor({1, 4, 5}, rng), ops::RowMask(4, 0), false).last());
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  Model<double> no_head(cfg, 14, false);
  EXPECT_FALSE(no_head.parameters().contains("head.out_w"));
  EXPECT_THROW(no_head.predict_frames(y), mam::ContractError);
}

TEST(Gradients, FullModelMatchesFiniteDifferences) {
  const auto cfg = small_config();
  Model<double> m(cfg, 16);
  std::mt19937_64 rng(17);
  auto x = random_tensor({2, 5, 5}, rng);
  auto target = random_tensor({2, 5, 5}, rng);
  ops::RowMask pad(10, 0), sel(10, 0);
  pad[9] = 1;
  sel[1] = sel[2] = sel[6] = sel[7] = 1;
  std::vector<Tensor<double>> leaves;
  for (auto& [name, p] : m.parameters()) leaves.push_back(p);
  auto loss = [&] {
    auto h = m.encode(x, pad, false).last();
    return ops::masked_l1_loss(m.predict_frames(h), target, sel);
  };
  const auto r = grad_check(loss, leaves);
  EXPECT_LT(r.max_rel_error, 1e-6);
  // every encoder tensor except the key bias (softmax is shift invariant)
  // receives some gradient
  for (const auto& name : m.encoder_parameter_names()) {
    if (name.ends_with("k_b")) continue;
    const auto& p = m.param(name);
    double g = 0;
    for (double v : p.grad()) g += std::abs(v);
    EXPECT_GT(g, 0.0) << name;
  }
}

}  // namespace

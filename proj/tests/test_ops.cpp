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
#include "mam/ops.hpp"

namespace {

using mam::Tensor;
using mam::Tape;
using mam::testing::grad_check;
using mam::testing::random_tensor;
namespace ops = mam::ops;

TEST(Matmul, HandComputedProduct) {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 2}, {5, 6, 7, 8});
  const auto c = ops::matmul(a, b);
  EXPECT_EQ(c.shape(), (mam::Shape{2, 2}));
  EXPECT_DOUBLE_EQ(c[0], 19);
  EXPECT_DOUBLE_EQ(c[1], 22);
  EXPECT_DOUBLE_EQ(c[2], 43);
  EXPECT_DOUBLE_EQ(c[3], 50);
}

TEST(Matmul, IdentityLeavesInputUnchanged) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({5, 7}, rng);
  Tensor<double> eye({7, 7});
  for (int i = 0; i < 7; ++i) eye[i * 8] = 1.0;
  const auto c = ops::matmul(a, eye);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(c[i], a[i]);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  Tensor<float> a({2, 3}), b({2, 3});
  EXPECT_THROW(ops::matmul(a, b), mam::DimensionError);
}

TEST(Matmul, GradientMatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 5}, rng);
  const auto r = grad_check([&] { return ops::sum(ops::mul(ops::matmul(a, b), ops::matmul(a, b))); }, {a, b});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(LayerNorm, TwoValueRowStandardizes) {
  Tensor<double> x({1, 2}, {1, 3});
  Tensor<double> g({2}, 1.0), b({2}, 0.0);
  const auto y = ops::layer_norm(x, g, b, 1e-12);
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tensor<double> x({2, 3}, {4, 4, 4, -2, -2, -2});
  Tensor<double> g({3}, 1.0), b({3}, 0.0);
  const auto y = ops::layer_norm(x, g, b, 1e-12);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, ZeroGammaGivesBeta) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 6}, rng);
  Tensor<double> g({6}, 0.0), b({6}, 5.0);
  const auto y = ops::layer_norm(x, g, b, 1e-12);
  for (double v : y.data()) EXPECT_EQ(v, 5.0);
}

TEST(MaskedL1, HandComputedValues) {
  Tensor<double> pred({2, 1}, {1, 2}), target({2, 1}, {0, 0});
  EXPECT_DOUBLE_EQ(ops::masked_l1_loss(pred, target, {1, 0}).item(), 1.0);
  EXPECT_DOUBLE_EQ(ops::masked_l1_loss(pred, target, {1, 1}).item(), 1.5);
  EXPECT_DOUBLE_EQ(ops::masked_l1_loss(pred, pred, {1, 1}).item(), 0.0);
}

TEST(MaskedL1, EmptySelectionThrows) {
  Tensor<double> pred({2, 1}, {1, 2});
  EXPECT_THROW(ops::masked_l1_loss(pred, pred, {0, 0}), mam::ContractError);
}

TEST(MaskedL1, UnselectedRowsGetZeroGradient) {
  std::mt19937_64 rng(4);
  auto pred = random_tensor({6, 3}, rng);
  auto target = random_tensor({6, 3}, rng);
  pred.set_requires_grad(true);
  Tape<double> tape;
  {
    auto rec = tape.record();
    tape.backward(ops::masked_l1_loss(pred, target, {0, 1, 0, 0, 1, 0}));
  }
  for (std::size_t r : {0u, 2u, 3u, 5u})
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(pred.grad()[r * 3 + d], 0.0);
  // d|x|/dx = sign(x) / (rows * dim)
  for (std::size_t d = 0; d < 3; ++d)
    EXPECT_DOUBLE_EQ(std::abs(pred.grad()[3 + d]), 1.0 / 6.0);
}

TEST(Backward, SumGivesOnes) {
  Tensor<double> x({4}, {1, -2, 3, 0.5});
  x.set_requires_grad(true);
  Tape<double> tape;
  {
    auto rec = tape.record();
    tape.backward(ops::sum(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
  auto x = Tensor<double>::scalar(3.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  {
    auto rec = tape.record();
    tape.backward(ops::mul(x, x));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor<double> x({3}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  auto rec = tape.record();
  auto y = ops::scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), mam::ContractError);
}

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({5, 4}, rng);
  auto w1 = random_tensor({4, 6}, rng, 0.5);
  auto b1 = random_tensor({6}, rng, 0.1);
  auto w2 = random_tensor({6, 3}, rng, 0.5);
  auto b2 = random_tensor({3}, rng, 0.1);
  auto target = random_tensor({5, 3}, rng);
  const std::vector<int> labels{0, 2, 1, 1, 0};
  auto net = [&] {
    auto h = ops::gelu(ops::linear(x, w1, b1));
    auto y = ops::linear(h, w2, b2);
    return ops::add(ops::cross_entropy(y, labels), ops::mean(ops::mul(ops::tanh(y), target)));
  };
  const auto r = grad_check(net, {x, w1, b1, w2, b2});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

// Each op is checked on its own through a random projection to a scalar.
double op_check(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& op,
                std::vector<Tensor<double>> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> probe;
  auto f = [&] {
    auto y = op(inputs);
    if (!probe.defined()) probe = random_tensor(y.shape(), rng);
    return ops::sum(ops::mul(y, probe));
  };
  return grad_check(f, inputs).max_rel_error;
}

TEST(GradCheck, EveryDifferentiableOp) {
  std::mt19937_64 rng(6);
  auto r = [&](mam::Shape s) { return random_tensor(std::move(s), rng); };
  EXPECT_LT(op_check([](auto& in) { return ops::linear(in[0], in[1], in[2]); }, {r({2, 3, 4}), r({4, 5}), r({5})}, 1),
            1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::bmm(in[0], in[1]); }, {r({2, 3, 4}), r({2, 4, 5})}, 2), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::bmm(in[0], in[1], true); }, {r({2, 3, 4}), r({2, 5, 4})}, 3), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::permute_0213(in[0]); }, {r({2, 3, 4, 5})}, 4), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::reshape(in[0], {6, 4}); }, {r({2, 3, 4})}, 5), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::add(in[0], in[1]); }, {r({3, 4}), r({3, 4})}, 6), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::mul(in[0], in[1]); }, {r({3, 4}), r({3, 4})}, 7), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::scale(in[0], 0.3); }, {r({3, 4})}, 8), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::softmax(in[0]); }, {r({3, 5})}, 9), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::gelu(in[0]); }, {r({3, 5})}, 10), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::tanh(in[0]); }, {r({3, 5})}, 11), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::layer_norm(in[0], in[1], in[2], 1e-12); },
                     {r({3, 6}), r({6}), r({6})}, 12),
            1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::weighted_sum<double>({in[0], in[1], in[2]}, ops::softmax(in[3])); },
                     {r({2, 3}), r({2, 3}), r({2, 3}), r({3})}, 13),
            1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::scale_by(in[0], in[1]); }, {r({3, 4}), r({1})}, 14), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::time_step(in[0], 1); }, {r({2, 3, 4})}, 15), 1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::select_rows(in[0], in[1], {1, 0, 1}); }, {r({3, 4}), r({3, 4})}, 16),
            1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::mask_keys(in[0], {0, 1, 0, 0, 0, 1}, 2, -5.0); }, {r({4, 2, 3})}, 17),
            1e-6);
  EXPECT_LT(op_check(
                [](auto& in) {
                  const std::vector<int> labels{1, -1, 3};
                  return ops::cross_entropy(in[0], labels);
                },
                {r({3, 4})}, 18),
            1e-6);
  EXPECT_LT(op_check([](auto& in) { return ops::masked_l1_loss(in[0], in[1], {1, 0, 1}); }, {r({3, 4}), r({3, 4})},
                     19),
            1e-6);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({4, 9}, rng, 3.0);
  auto shifted = x.clone();
  for (std::size_t i = 0; i < 9; ++i) shifted[2 * 9 + i] += 17.0;
  const auto a = ops::softmax(x);
  const auto b = ops::softmax(shifted);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t i = 0; i < 9; ++i) s += a[r * 9 + i];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a[18 + i], b[18 + i], 1e-12);
}

TEST(Dropout, EvalAndZeroProbabilityAreIdentity) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({3, 3}, rng);
  EXPECT_TRUE(ops::dropout(x, 0.5, rng, false).same_storage(x));
  EXPECT_TRUE(ops::dropout(x, 0.0, rng, true).same_storage(x));
}

TEST(Dropout, InvertedScalingKeepsMean) {
  std::mt19937_64 rng(9);
  Tensor<double> x({100000}, 1.0);
  const auto y = ops::dropout(x, 0.1, rng, true);
  double s = 0;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    s += v;
    if (v == 0.0) ++zeros;
    else EXPECT_NEAR(v, 1.0 / 0.9, 1e-12);
  }
  EXPECT_NEAR(s / 100000.0, 1.0, 0.01);
  EXPECT_NEAR(zeros / 100000.0, 0.1, 0.005);
}

}  // namespace

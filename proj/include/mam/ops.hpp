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

// Differentiable operations. Every function here is instantiated for float
// (training) and double (gradient checking).

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mam/tensor.hpp"

namespace mam::ops {

/// Per-row boolean flags (one byte each, nonzero = true).
using RowMask = std::vector<std::uint8_t>;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., K] · w[K, N] + bias[N]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

/// Batched product a[n, M, K] · b[n, K, P], or a · b[n, P, K]ᵀ when
/// transpose_b is set.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// [a, b, c, d] -> [a, c, b, d]; splits and merges attention heads.
template <typename T>
Tensor<T> permute_0213(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Softmax over the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

/// Adds `bias` to the attention logits scores[batch*heads, Tq, Tk] at every
/// key column whose key_pad[batch*Tk + k] flag is set. The gradient passes
/// through unchanged.
template <typename T>
Tensor<T> mask_keys(const Tensor<T>& scores, const RowMask& key_pad, std::size_t heads, T bias);

/// Inverted dropout. Identity (same handle) when !train or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64& rng, bool train);

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

/// Standardizes the last axis then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// Mean absolute error over the rows flagged in `select`; pred and target
/// are viewed as [rows, last-dim]. Unselected rows get an exactly-zero
/// gradient. Throws ContractError when nothing is selected.
template <typename T>
Tensor<T> masked_l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const RowMask& select);

/// Mean softmax cross-entropy of logits[N, C]; rows labelled -1 are ignored.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Σᵢ weights[i] · layers[i]; all layers share one shape.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& layers, const Tensor<T>& weights);

/// factor[0] · x with a learnable one-element factor.
template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& factor);

/// x[B, T, D] -> x[:, t, :] as [B, D].
template <typename T>
Tensor<T> time_step(const Tensor<T>& x, std::size_t t);

/// Row-wise select: take[r] ? a[r] : b[r] for a, b of shape [B, D].
template <typename T>
Tensor<T> select_rows(const Tensor<T>& a, const Tensor<T>& b, const RowMask& take);

/// True iff every value is finite.
template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace mam::ops

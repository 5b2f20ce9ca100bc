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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mam/features.hpp"
#include "mam/model.hpp"
#include "mam/tensor.hpp"

namespace mam::repr {

/// Per-layer hidden states of one utterance, each [T, H].
template <typename T>
using RepresentationStack = std::vector<Tensor<T>>;

/// ELMo-style scalar mix: gamma · Σᵢ softmax(logits)ᵢ · layerᵢ.
template <typename T>
struct WeightedSumMixer {
  Tensor<T> logits;  // [L]
  Tensor<T> gamma;   // [1]
  bool train_gamma = true;

  /// Uniform logits, gamma = 1.
  explicit WeightedSumMixer(std::size_t layers, bool train_gamma = true);
  WeightedSumMixer(std::vector<T> logits, T gamma, bool train_gamma = true);

  std::size_t layers() const { return logits.numel(); }
  /// softmax(logits) as plain numbers.
  std::vector<T> weights() const;
  void set_trainable(bool on);
};

template <typename T>
Tensor<T> extract_last(const RepresentationStack<T>& stack);

/// Throws DimensionError when the stack size and logit count differ.
template <typename T>
Tensor<T> mix(const RepresentationStack<T>& stack, const WeightedSumMixer<T>& mixer);

enum class Mode { last, weighted };

Mode mode_from_string(const std::string& name);

/// Runs the encoder (eval mode) over one stacked feature sequence and
/// returns its per-layer stack with the batch axis dropped.
RepresentationStack<float> encode_utterance(const model::Model<float>& model, const features::FeatureSequence& seq);

/// Writes one "MAMF" file per utterance (kind = repr, D = hidden size,
/// T = the stacked input T). `mixer` is only read in weighted mode.
void dump_representations(const std::vector<features::FeatureSequence>& corpus, const model::Model<float>& model,
                          Mode mode, const WeightedSumMixer<float>& mixer, const std::filesystem::path& out_dir);

extern template struct WeightedSumMixer<float>;
extern template struct WeightedSumMixer<double>;

}  // namespace mam::repr

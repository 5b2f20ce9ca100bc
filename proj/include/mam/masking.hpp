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

// Masked-acoustic-modeling data policy: consecutive block selection, the
// per-utterance zero / random / keep alteration, and padded batch assembly.
// Every random draw is a function of (epoch seed, utterance id), so a given
// pair always reproduces the same mask while each epoch sees a new one.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mam/features.hpp"

namespace mam::masking {

using BoolMask = std::vector<std::uint8_t>;

struct MaskPolicy {
  double mask_proportion = 0.15;
  int consecutive = 7;
  double p_zero = 0.80;
  double p_random = 0.10;
  double p_keep = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Branch : std::uint8_t { zero = 0, random = 1, keep = 2 };

const char* to_string(Branch b);

/// Number of blocks drawn for a sequence: max(1, round(p·T / C)), capped so
/// the blocks fit without overlapping.
std::size_t block_count(std::size_t t_len, const MaskPolicy& policy);

/// Marks block_count() non-overlapping runs of `consecutive` frames. Every
/// arrangement of the runs is equally likely; runs may touch.
BoolMask select_positions(std::size_t t_len, const MaskPolicy& policy, std::mt19937_64& rng);

struct Alteration {
  std::vector<float> frames;
  Branch branch = Branch::keep;
};

/// Draws one branch for the whole utterance and applies it to the selected
/// rows of frames[t_len × dim]. The random branch replaces each selected row
/// with a copy of a uniformly drawn row of the same utterance.
Alteration apply_sub_random(const std::vector<float>& frames, std::size_t dim, const BoolMask& select,
                            const MaskPolicy& policy, std::mt19937_64& rng);

/// Model-ready batch, time-padded to the longest utterance.
struct MaskedBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
  std::vector<float> inputs;   // batch × steps × input_dim, altered
  std::vector<float> targets;  // batch × steps × target_dim, untouched
  BoolMask select_mask;        // batch × steps
  BoolMask pad_mask;           // batch × steps, true at padding
  std::vector<Branch> branches;
  std::vector<std::string> utterance_ids;

  std::size_t selected_count() const;
};

/// Seed for one utterance's mask under one epoch.
std::uint64_t utterance_seed(std::uint64_t epoch_seed, const std::string& utterance_id);

/// `targets` may be empty, in which case the unaltered inputs are the
/// targets; otherwise it must align 1:1 (same T) with `inputs`.
MaskedBatch make_batch(const std::vector<const features::FeatureSequence*>& inputs,
                       const std::vector<const features::FeatureSequence*>& targets, const MaskPolicy& policy,
                       std::uint64_t epoch_seed);

/// Pads without masking (fine-tuning, extraction): select_mask is all false.
MaskedBatch make_plain_batch(const std::vector<const features::FeatureSequence*>& inputs);

}  // namespace mam::masking

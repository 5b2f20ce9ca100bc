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

#include "mam/masking.hpp"

#include <algorithm>
#include <cmath>

#include "mam/error.hpp"
#include "mam/rng.hpp"

namespace mam::masking {

void MaskPolicy::validate() const {
  if (!(mask_proportion > 0.0 && mask_proportion < 1.0))
    throw ContractError("mask policy: mask_proportion must lie in (0, 1)");
  if (consecutive < 1) throw ContractError("mask policy: consecutive must be at least 1");
  if (p_zero < 0 || p_random < 0 || p_keep < 0 || std::abs(p_zero + p_random + p_keep - 1.0) > 1e-9)
    throw ContractError("mask policy: branch probabilities must be non-negative and sum to 1");
}

const char* to_string(Branch b) {
  switch (b) {
    case Branch::zero:
      return "zero";
    case Branch::random:
      return "random";
    case Branch::keep:
      return "keep";
  }
  return "unknown";
}

std::size_t block_count(std::size_t t_len, const MaskPolicy& policy) {
  const auto c = static_cast<std::size_t>(policy.consecutive);
  const double want = policy.mask_proportion * static_cast<double>(t_len) / static_cast<double>(c);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(want)));
  return std::min(n, t_len / c);
}

BoolMask select_positions(std::size_t t_len, const MaskPolicy& policy, std::mt19937_64& rng) {
  policy.validate();
  const auto c = static_cast<std::size_t>(policy.consecutive);
  if (t_len < c) {
    throw ContractError("select_positions: sequence of " + std::to_string(t_len) +
                        " steps is shorter than one block of " + std::to_string(c));
  }
  const std::size_t n = block_count(t_len, policy);
  // Lay out n blocks and (t_len - n·c) free frames as a sequence of
  // items; picking which n of the items are blocks is a uniform draw over
  // all non-overlapping arrangements.
  const std::size_t items = t_len - n * c + n;
  std::vector<std::size_t> picks;
  picks.reserve(n);
  // Floyd's algorithm: n distinct values from [0, items).
  for (std::size_t j = items - n; j < items; ++j) {
    std::uniform_int_distribution<std::size_t> u(0, j);
    const std::size_t v = u(rng);
    if (std::find(picks.begin(), picks.end(), v) == picks.end())
      picks.push_back(v);
    else
      picks.push_back(j);
  }
  std::sort(picks.begin(), picks.end());
  BoolMask mask(t_len, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = picks[i] + i * (c - 1);
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(start), c, std::uint8_t{1});
  }
  return mask;
}

Alteration apply_sub_random(const std::vector<float>& frames, std::size_t dim, const BoolMask& select,
                            const MaskPolicy& policy, std::mt19937_64& rng) {
  if (dim == 0 || frames.size() != select.size() * dim)
    throw DimensionError("apply_sub_random: frames do not match the selection length");
  if (std::none_of(select.begin(), select.end(), [](std::uint8_t s) { return s != 0; }))
    throw ContractError("apply_sub_random: empty selection");
  Alteration out;
  out.frames = frames;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  if (draw < policy.p_zero) {
    out.branch = Branch::zero;
  } else if (draw < policy.p_zero + policy.p_random) {
    out.branch = Branch::random;
  } else {
    out.branch = Branch::keep;
  }
  const std::size_t t_len = select.size();
  std::uniform_int_distribution<std::size_t> pick(0, t_len - 1);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!select[t]) continue;
    float* row = out.frames.data() + t * dim;
    if (out.branch == Branch::zero) {
      std::fill_n(row, dim, 0.0f);
    } else if (out.branch == Branch::random) {
      const std::size_t src = pick(rng);
      std::copy_n(frames.data() + src * dim, dim, row);
    }
  }
  return out;
}

std::size_t MaskedBatch::selected_count() const {
  return static_cast<std::size_t>(std::count_if(select_mask.begin(), select_mask.end(),
                                                [](std::uint8_t s) { return s != 0; }));
}

std::uint64_t utterance_seed(std::uint64_t epoch_seed, const std::string& utterance_id) {
  return derive_seed(epoch_seed, utterance_id);
}

namespace {

MaskedBatch pad_batch(const std::vector<const features::FeatureSequence*>& inputs,
                      const std::vector<const features::FeatureSequence*>& targets) {
  if (inputs.empty()) throw ContractError("make_batch: empty utterance list");
  if (!targets.empty() && targets.size() != inputs.size())
    throw DimensionError("make_batch: targets must pair 1:1 with inputs");
  MaskedBatch b;
  b.batch = inputs.size();
  b.input_dim = inputs.front()->dim;
  b.target_dim = targets.empty() ? b.input_dim : targets.front()->dim;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto* in = inputs[i];
    if (in->dim != b.input_dim) throw DimensionError("make_batch: utterance '" + in->utterance_id + "' has a different feature dimension");
    if (in->num_frames == 0) throw ContractError("make_batch: utterance '" + in->utterance_id + "' is empty");
    if (!targets.empty()) {
      if (targets[i]->num_frames != in->num_frames || targets[i]->dim != b.target_dim)
        throw DimensionError("make_batch: target for '" + in->utterance_id + "' does not align with its input");
    }
    b.steps = std::max(b.steps, in->num_frames);
  }
  b.inputs.assign(b.batch * b.steps * b.input_dim, 0.0f);
  b.targets.assign(b.batch * b.steps * b.target_dim, 0.0f);
  b.select_mask.assign(b.batch * b.steps, 0);
  b.pad_mask.assign(b.batch * b.steps, 1);
  b.branches.assign(b.batch, Branch::keep);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto* in = inputs[i];
    const auto* tg = targets.empty() ? in : targets[i];
    std::copy(in->frames.begin(), in->frames.end(), b.inputs.begin() + static_cast<std::ptrdiff_t>(i * b.steps * b.input_dim));
    std::copy(tg->frames.begin(), tg->frames.end(), b.targets.begin() + static_cast<std::ptrdiff_t>(i * b.steps * b.target_dim));
    std::fill_n(b.pad_mask.begin() + static_cast<std::ptrdiff_t>(i * b.steps), in->num_frames, std::uint8_t{0});
    b.utterance_ids.push_back(in->utterance_id);
  }
  return b;
}

}  // namespace

MaskedBatch make_batch(const std::vector<const features::FeatureSequence*>& inputs,
                       const std::vector<const features::FeatureSequence*>& targets, const MaskPolicy& policy,
                       std::uint64_t epoch_seed) {
  policy.validate();
  MaskedBatch b = pad_batch(inputs, targets);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto* in = inputs[i];
    std::mt19937_64 rng(utterance_seed(epoch_seed, in->utterance_id));
    BoolMask sel = select_positions(in->num_frames, policy, rng);
    Alteration alt = apply_sub_random(in->frames, in->dim, sel, policy, rng);
    std::copy(alt.frames.begin(), alt.frames.end(), b.inputs.begin() + static_cast<std::ptrdiff_t>(i * b.steps * b.input_dim));
    std::copy(sel.begin(), sel.end(), b.select_mask.begin() + static_cast<std::ptrdiff_t>(i * b.steps));
    b.branches[i] = alt.branch;
  }
  return b;
}

MaskedBatch make_plain_batch(const std::vector<const features::FeatureSequence*>& inputs) {
  return pad_batch(inputs, {});
}

}  // namespace mam::masking

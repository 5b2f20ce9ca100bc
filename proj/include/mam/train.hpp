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

// Pre-training and fine-tuning loops.
//
// Step s (0-based) of pre-training uses batch perm_e[s mod nb] of epoch
// e = s / nb, masks drawn under derive_seed(mask seed, e), dropout drawn
// from derive_seed(dropout seed, s) and learning rate lr_at(s + 1). Nothing
// else carries state between steps, so resuming from a checkpoint replays
// exactly the same trace.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mam/checkpoint.hpp"
#include "mam/features.hpp"
#include "mam/masking.hpp"
#include "mam/model.hpp"
#include "mam/optim.hpp"
#include "mam/probes.hpp"

namespace mam::train {

/// Stacked model inputs and (optionally) separate reconstruction targets;
/// an empty `targets` means the inputs are reconstructed.
struct Corpus {
  std::vector<features::FeatureSequence> inputs;
  std::vector<features::FeatureSequence> targets;

  std::size_t size() const { return inputs.size(); }
  /// Throws ContractError when empty and DimensionError when a sequence does
  /// not fit `cfg` or targets do not align with inputs.
  void validate(const model::EncoderConfig& cfg) const;
};

struct LossRecord {
  std::uint64_t step = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;

  bool operator==(const LossRecord&) const = default;
};

/// Length-bucketed batches: utterances sorted by length (then index) and cut
/// into runs of batch_size. Stable for a given corpus.
std::vector<std::vector<std::size_t>> make_buckets(const std::vector<features::FeatureSequence>& inputs,
                                                   std::size_t batch_size);

/// Order in which the buckets are visited during one epoch.
std::vector<std::size_t> epoch_order(std::size_t buckets, std::uint64_t seed, std::uint64_t epoch);

// ---- checkpoints ---------------------------------------------------------

/// Model weights (plus Adam moments as adam.m.<name> / adam.v.<name> when
/// given) and the encoder config under meta.*.
checkpoint::Checkpoint to_checkpoint(const model::Model<float>& model, const optim::AdamState* adam,
                                     std::uint64_t step);

model::EncoderConfig config_from_checkpoint(const checkpoint::Checkpoint& ckpt);
bool checkpoint_has_head(const checkpoint::Checkpoint& ckpt);

/// Copies weights (and moments) into an already-built model. Throws
/// DimensionError naming the first tensor whose shape differs, FormatError
/// for a missing one.
void load_into(model::Model<float>& model, const checkpoint::Checkpoint& ckpt, optim::AdamState* adam);

/// Builds the model described by the checkpoint and loads its weights.
model::Model<float> load_model(const std::filesystem::path& path);

// ---- pre-training --------------------------------------------------------

struct PretrainOptions {
  model::EncoderConfig encoder = model::EncoderConfig::base();
  masking::MaskPolicy policy;
  optim::TrainSchedule schedule = optim::TrainSchedule::pretraining();
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  /// 0 writes only the final checkpoint.
  std::uint64_t checkpoint_every = 0;
  /// Where checkpoints and loss.csv go; empty keeps everything in memory.
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many total steps (0 = schedule.total_steps). The
  /// schedule itself is unaffected.
  std::uint64_t stop_after = 0;
  std::function<void(const LossRecord&)> on_step;
};

struct TrainState {
  model::Model<float> model;
  optim::AdamState adam;
  std::uint64_t step = 0;
  std::vector<LossRecord> log;
};

TrainState pretrain(const Corpus& corpus, const PretrainOptions& opts);

/// Final-step path used by pretrain: <out_dir>/last.mamc.
std::filesystem::path last_checkpoint_path(const std::filesystem::path& out_dir);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

// ---- fine-tuning ---------------------------------------------------------

struct FinetuneOptions {
  optim::TrainSchedule schedule = optim::TrainSchedule::finetuning();
  std::size_t epochs = 2;
  /// Multiplies the encoder's learning rate; 0 freezes it.
  double encoder_lr_scale = 1.0;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  /// Downstream shape (RNN width, readout) and the split fractions.
  probes::ProbeConfig probe;
  std::function<void(const LossRecord&)> on_step;
};

struct FinetuneResult {
  probes::ProbeReport report;
  std::vector<LossRecord> log;
};

/// Optimizer steps taken for `train_items` utterances over `epochs`.
std::uint64_t finetune_steps(std::size_t train_items, std::size_t batch_size, std::size_t epochs);

/// Encoder plus a fresh linear frame classifier on the last layer, trained
/// jointly on the budgeted part of split.train, scored on split.test.
/// `frame_labels[i]` is aligned to the stacked steps of `inputs[i]`.
FinetuneResult finetune_frames(model::Model<float>& model, const std::vector<features::FeatureSequence>& inputs,
                               const std::vector<std::vector<int>>& frame_labels, const probes::Split& split,
                               double budget, int num_classes, const FinetuneOptions& opts);

/// Encoder plus a fresh RNN utterance classifier; 9:1 seeded split.
FinetuneResult finetune_utterances(model::Model<float>& model, const std::vector<features::FeatureSequence>& inputs,
                                   const std::vector<int>& labels, int num_classes, const FinetuneOptions& opts);

}  // namespace mam::train

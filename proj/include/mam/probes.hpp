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

// Downstream probes: a linear frame classifier (phone-style labels) and a
// one-layer recurrent utterance classifier (speaker/sentiment-style labels),
// label budgets for low-resource sweeps, and the label/report file formats.
//
// Every probe run is built from one ProbeConfig whatever the input features
// are; only the input width changes between raw features and
// representations.

#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mam/optim.hpp"
#include "mam/repr.hpp"
#include "mam/tensor.hpp"

namespace mam::probes {

struct FrameLabelSet {
  /// Class ids on the 10 ms (pre-stacking) frame grid.
  std::map<std::string, std::vector<int>> labels;
  int num_classes = 0;
};

struct UtteranceLabelSet {
  std::map<std::string, int> labels;
  int num_classes = 0;
};

/// CSV "utterance_id,frame_index,class_id" (a header line is optional).
/// num_classes = 0 infers max id + 1. Frame gaps are filled with -1.
FrameLabelSet read_frame_labels(const std::filesystem::path& path, int num_classes = 0);
void write_frame_labels(const std::filesystem::path& path, const FrameLabelSet& set);

/// CSV "utterance_id,class_id".
UtteranceLabelSet read_utterance_labels(const std::filesystem::path& path, int num_classes = 0);
void write_utterance_labels(const std::filesystem::path& path, const UtteranceLabelSet& set);

/// Majority vote of the raw frame labels inside each stacked step (ties go
/// to the smaller id; steps with no labelled frame get -1). The result has
/// exactly `steps` entries.
std::vector<int> align_frame_labels(std::span<const int> raw, int stack_factor, std::size_t steps);

enum class Readout { last, mean };

struct ProbeConfig {
  double lr = 1e-3;
  std::size_t batch_frames = 256;
  std::size_t batch_utterances = 16;
  std::size_t max_epochs = 40;
  /// Early stop after this many evaluations without a validation gain.
  std::size_t patience = 5;
  std::size_t rnn_hidden = 256;
  Readout readout = Readout::last;
  double test_fraction = 0.1;
  double valid_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// One utterance as seen by a probe. `layers` holds a single [T, D] matrix
/// for plain inputs, or every encoder layer when a weighted-sum mixer is
/// trained along with the probe.
struct ProbeUtterance {
  std::string id;
  std::vector<Tensor<float>> layers;
  std::vector<int> frame_labels;  // T entries, -1 = unlabelled
  int label = -1;

  std::size_t steps() const { return layers.front().dim(0); }
  std::size_t dim() const { return layers.front().dim(1); }
};

using ProbeDataset = std::vector<ProbeUtterance>;

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

/// Seeded random split of utterance indices into test, validation and the
/// remaining training pool. Each part is non-empty when n >= 3.
Split split_utterances(std::size_t n, double test_fraction, double valid_fraction, std::uint64_t seed);

/// As split_utterances, but re-split per class when a class present in the
/// data would be missing from the training pool.
Split split_stratified(std::span<const int> labels, double test_fraction, double valid_fraction, std::uint64_t seed);

/// max(1, round(budget · n)).
std::size_t budget_count(std::size_t n, double budget);

/// Prefix of a seeded permutation of `pool`; smaller budgets therefore pick
/// subsets of larger ones. Throws ContractError for budget outside (0, 1] or
/// an empty pool.
std::vector<std::size_t> budget_subset(std::span<const std::size_t> pool, double budget, std::uint64_t seed);

struct ProbeReport {
  std::string input_kind;
  std::string task;
  std::string split = "test";
  double budget = 1.0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
  std::size_t labeled_utterances = 0;
  std::size_t labeled_frames = 0;
  std::size_t epochs = 0;
  std::vector<double> mixer_weights;
  double mixer_gamma = 1.0;
};

/// Exact-match fraction. Throws DimensionError on length mismatch and
/// ContractError on empty input.
double evaluate_accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Softmax-regression classifier on frame vectors.
template <typename T>
struct LinearClassifier {
  Tensor<T> weight;  // [D, C]
  Tensor<T> bias;    // [C]

  LinearClassifier(std::size_t input_dim, std::size_t classes, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) const;  // [N, D] -> [N, C]
  std::vector<optim::ParamRef> params(const std::string& prefix) requires std::same_as<T, float>;
};

/// Elman RNN (tanh) over [B, T, D] with per-item lengths, then a linear
/// readout of the last valid state or the mean state.
template <typename T>
struct RnnClassifier {
  Tensor<T> w_in;   // [D, H]
  Tensor<T> w_rec;  // [H, H]
  Tensor<T> b_rec;  // [H]
  Tensor<T> w_out;  // [H, C]
  Tensor<T> b_out;  // [C]
  Readout readout = Readout::last;

  RnnClassifier(std::size_t input_dim, std::size_t hidden, std::size_t classes, Readout readout,
                std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, std::span<const std::size_t> lengths) const;  // -> [B, C]
  std::vector<optim::ParamRef> params(const std::string& prefix) requires std::same_as<T, float>;
};

/// Trains a linear frame classifier on the budgeted part of split.train,
/// early-stops on split.valid and reports frame accuracy on split.test.
/// When utterances carry several layers a WeightedSumMixer is trained too.
ProbeReport train_linear_frame_probe(const ProbeDataset& data, const Split& split, double budget, int num_classes,
                                     const ProbeConfig& cfg, const std::string& input_kind);

/// Splits 9:1 (seeded, stratified fallback), trains the RNN classifier and
/// reports utterance accuracy on the held-out part. Throws ContractError
/// when fewer than two classes are present.
ProbeReport train_rnn_utterance_probe(const ProbeDataset& data, int num_classes, const ProbeConfig& cfg,
                                      const std::string& input_kind);

/// One linear frame probe per budget over nested subsets. Budgets must be
/// ascending and inside (0, 1].
std::vector<ProbeReport> low_resource_sweep(const ProbeDataset& data, const Split& split,
                                            std::span<const double> budgets, int num_classes,
                                            const ProbeConfig& cfg, const std::string& input_kind);

/// Report CSV "input_kind,task,budget,accuracy,seed"; appends when the file
/// exists, writing the header only for a new file.
void append_reports_csv(const std::filesystem::path& path, std::span<const ProbeReport> reports);

/// Plot-ready sweep table "budget,labeled_utterances,labeled_frames,accuracy".
void write_sweep_table(const std::filesystem::path& path, std::span<const ProbeReport> reports);

}  // namespace mam::probes

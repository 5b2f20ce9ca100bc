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

// Feature cache on disk and the glue that turns cached features, labels and
// a checkpoint into training corpora and probe datasets.
//
// Cache layout:
//   <cache>/mel/<id>.mamf      log-Mel (+CMVN)
//   <cache>/linear/<id>.mamf   log-linear (+CMVN), optional
//   <cache>/manifest.txt       one utterance id per line

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mam/features.hpp"
#include "mam/model.hpp"
#include "mam/probes.hpp"
#include "mam/train.hpp"

namespace mam::pipeline {

struct CacheStats {
  std::size_t written = 0;
  std::size_t skipped = 0;
};

/// Sorted *.wav files directly inside `dir`. Throws ContractError
/// "no utterances found in <dir>" when there are none.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

/// mel (+ linear) features of one waveform, CMVN applied when cfg.cmvn.
features::FeatureSequence compute_features(const features::Waveform& wave, const features::FeatureConfig& cfg,
                                           features::FeatureKind kind, const std::string& id);

/// Fills the cache from a WAV directory. Files that already exist and parse
/// are left alone, so re-running on a complete cache writes nothing.
CacheStats build_cache(const std::filesystem::path& wav_dir, const std::filesystem::path& cache_dir,
                       const features::FeatureConfig& cfg, bool with_linear);

/// Same, from in-memory waveforms.
CacheStats build_cache(const std::vector<features::Waveform>& waves, const std::vector<std::string>& ids,
                       const std::filesystem::path& cache_dir, const features::FeatureConfig& cfg, bool with_linear);

/// Ids listed in the manifest. A missing cache raises IoError telling the
/// user to run the `features` command first.
std::vector<std::string> read_manifest(const std::filesystem::path& cache_dir);

std::vector<features::FeatureSequence> load_cache(const std::filesystem::path& cache_dir, features::FeatureKind kind);

std::vector<features::FeatureSequence> stack_all(const std::vector<features::FeatureSequence>& seqs, int r);

/// Stacks by cfg.downsample; linear targets are used when cfg.target_kind
/// asks for them.
train::Corpus make_corpus(const std::vector<features::FeatureSequence>& mel,
                          const std::vector<features::FeatureSequence>& linear, const model::EncoderConfig& cfg);

enum class InputKind { mel, repr_last, repr_weighted };

InputKind input_kind_from_string(const std::string& name);
const char* to_string(InputKind kind);

/// Probe inputs for every utterance in `stacked` that has the labels the
/// task needs. Frame labels are majority-aligned to the stacked steps.
/// `model` is required for the repr kinds.
probes::ProbeDataset make_probe_dataset(const std::vector<features::FeatureSequence>& stacked, InputKind kind,
                                        const model::Model<float>* model, const probes::FrameLabelSet* frames,
                                        const probes::UtteranceLabelSet* utterances);

/// Frame labels aligned to stacked steps, in the order of `stacked`.
std::vector<std::vector<int>> aligned_frame_labels(const std::vector<features::FeatureSequence>& stacked,
                                                   const probes::FrameLabelSet& frames);

}  // namespace mam::pipeline

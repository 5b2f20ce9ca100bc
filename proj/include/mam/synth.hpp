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

// Synthetic labelled speech-like corpus.
//
// Each "phone" is a fixed spectral envelope (a few formant bumps) sampled by
// the harmonics of a speaker-specific f0 and tilted by a speaker-specific
// spectral slope. Utterances are runs of phone segments 15..40 frames long
// plus white noise, so frame labels come from the phone sequence and
// utterance labels from the speaker.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mam/features.hpp"
#include "mam/probes.hpp"

namespace mam::synth {

struct SynthConfig {
  std::size_t utterances = 50;
  int phones = 8;
  int speakers = 4;
  double min_seconds = 1.0;
  double max_seconds = 1.5;
  int sample_rate = 16000;
  int min_segment_frames = 15;
  int max_segment_frames = 40;
  /// Speaker pitch range in Hz.
  double f0_min = 60.0;
  double f0_max = 120.0;
  /// Each speaker shifts every formant by one offset drawn uniformly from
  /// [-formant_offset_hz, formant_offset_hz].
  double formant_offset_hz = 0.0;
  /// Frames over which a segment's envelope glides in from the previous
  /// phone; 0 switches abruptly.
  int transition_frames = 0;
  /// White-noise standard deviation (signal RMS is about 0.1).
  double noise = 0.001;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthCorpus {
  std::vector<std::string> ids;
  std::vector<features::Waveform> waves;
  probes::FrameLabelSet frame_labels;  // on the 10 ms analysis grid
  probes::UtteranceLabelSet speaker_labels;
};

SynthCorpus synthesize(const SynthConfig& cfg, const features::FeatureConfig& feat = {});

/// Writes <dir>/wav/<id>.wav when `with_wav`, <dir>/frame_labels.csv and
/// <dir>/utt_labels.csv.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir, bool with_wav);

}  // namespace mam::synth

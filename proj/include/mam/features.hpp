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

// WAV ingestion, log-Mel / log-linear spectrograms, per-utterance CMVN,
// frame stacking, and the "MAMF" feature-cache format.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mam::features {

enum class FeatureKind : std::uint8_t { mel = 0, linear = 1, repr = 2 };

const char* to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

struct FeatureConfig {
  int n_fft = 400;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 160;
  double log_floor = 1e-10;
  bool cmvn = true;

  int window_samples(int sample_rate) const;
  int hop_samples(int sample_rate) const;
  /// Throws ContractError when the settings cannot describe an STFT.
  void validate(int sample_rate) const;
};

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 16000;
};

/// T×D row-major frames plus provenance.
struct FeatureSequence {
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<float> frames;
  FeatureKind kind = FeatureKind::mel;
  int sample_rate_hz = 16000;
  float hop_ms = 10.0f;
  int stack_factor = 1;
  std::string utterance_id;

  std::span<float> row(std::size_t t) { return {frames.data() + t * dim, dim}; }
  std::span<const float> row(std::size_t t) const { return {frames.data() + t * dim, dim}; }
  float at(std::size_t t, std::size_t d) const { return frames[t * dim + d]; }
  std::size_t base_dim() const { return dim / static_cast<std::size_t>(stack_factor); }
};

/// Reads RIFF/WAVE PCM16; stereo channels are averaged. 8-bit, float and
/// compressed encodings raise FormatError, as does a file with no samples.
Waveform load_wav(const std::filesystem::path& path);

/// Writes mono PCM16; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Hann-windowed STFT power → log(power + log_floor), optionally through a
/// triangular Mel filterbank. T = 1 + ⌊(len − win) / hop⌋.
FeatureSequence log_spectrogram(const Waveform& wave, const FeatureConfig& cfg, FeatureKind kind);

/// Triangular HTK-Mel filterbank, n_mels rows × (n_fft/2 + 1) columns.
std::vector<float> mel_filterbank(int n_mels, int n_fft, int sample_rate);

/// Per-dimension zero mean / unit variance over the utterance. Dimensions
/// with variance below 1e-8 come out as zeros.
FeatureSequence cmvn(const FeatureSequence& seq);

/// Zero-pads T up to a multiple of r, then folds r consecutive frames into
/// one step of width D·r.
FeatureSequence stack_frames(const FeatureSequence& seq, int r);

/// Inverse of stack_frames; trailing zero-padding rows are kept.
FeatureSequence unstack_frames(const FeatureSequence& seq);

/// Feature-cache file ("MAMF", little-endian, version 1).
void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq);
/// The utterance id is taken from the file stem; the sample rate is not
/// stored and reads back as 16000.
FeatureSequence read_feature_file(const std::filesystem::path& path);

inline constexpr std::uint32_t kFeatureFileVersion = 1;

}  // namespace mam::features

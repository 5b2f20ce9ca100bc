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

#include "mam/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "binary_io.hpp"
#include "mam/error.hpp"

namespace mam::features {

namespace {

// FFTW's planner is not thread-safe; executing a plan is.
std::mutex g_fftw_planner_mutex;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::mel:
      return "mel";
    case FeatureKind::linear:
      return "linear";
    case FeatureKind::repr:
      return "repr";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "mel") return FeatureKind::mel;
  if (name == "linear") return FeatureKind::linear;
  if (name == "repr") return FeatureKind::repr;
  throw ContractError("unknown feature kind '" + name + "'");
}

int FeatureConfig::window_samples(int sample_rate) const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int FeatureConfig::hop_samples(int sample_rate) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

void FeatureConfig::validate(int sample_rate) const {
  if (sample_rate <= 0) throw ContractError("feature config: sample rate must be positive");
  const int win = window_samples(sample_rate);
  if (win < 2) throw ContractError("feature config: window shorter than two samples");
  if (hop_samples(sample_rate) < 1) throw ContractError("feature config: hop must be at least one sample");
  if (n_fft < win || n_fft % 2 != 0) {
    throw ContractError("feature config: n_fft must be even and at least the window length (" +
                        std::to_string(win) + " samples)");
  }
  if (n_mels < 1 || n_mels > n_fft / 2 + 1) {
    throw ContractError("feature config: n_mels must lie in [1, n_fft/2 + 1]");
  }
  if (!(log_floor > 0.0)) throw ContractError("feature config: log_floor must be positive");
}

Waveform load_wav(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  char riff[4], wave_tag[4];
  r.get_bytes(riff, 4);
  r.get<std::uint32_t>();
  r.get_bytes(wave_tag, 4);
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave_tag, "WAVE", 4) != 0) {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    char id[4];
    r.get_bytes(id, 4);
    const auto size = r.get<std::uint32_t>();
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(path.string() + ": short fmt chunk");
      std::vector<char> chunk(size);
      r.get_bytes(chunk.data(), size);
      std::memcpy(&format, chunk.data(), 2);
      std::memcpy(&channels, chunk.data() + 2, 2);
      std::memcpy(&rate, chunk.data() + 4, 4);
      std::memcpy(&bits, chunk.data() + 14, 2);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(path.string() + ": data chunk before fmt chunk");
      // 0xFFFE is WAVE_FORMAT_EXTENSIBLE; its PCM16 payload is plain PCM.
      if ((format != 1 && format != 0xFFFE) || bits != 16) {
        throw FormatError(path.string() + ": unsupported encoding (format " + std::to_string(format) +
                          ", " + std::to_string(bits) + " bits); only PCM16 is supported");
      }
      if (channels == 0) throw FormatError(path.string() + ": zero channels");
      const std::size_t avail = std::min<std::size_t>(size, r.remaining());
      const std::size_t frames = avail / (2u * channels);
      if (frames == 0) throw FormatError(path.string() + ": no audio samples");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        float acc = 0.0f;
        for (std::uint16_t c = 0; c < channels; ++c) acc += static_cast<float>(r.get<std::int16_t>()) / 32768.0f;
        w.samples[i] = acc / static_cast<float>(channels);
      }
      return w;
    } else {
      std::vector<char> skip(size + (size & 1u));
      if (skip.size() > r.remaining()) break;
      r.get_bytes(skip.data(), skip.size());
    }
  }
  throw FormatError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  io::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  w.put_bytes("RIFF", 4);
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_bytes("WAVEfmt ", 8);
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(1);
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(wave.sample_rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(wave.sample_rate) * 2);
  w.put<std::uint16_t>(2);
  w.put<std::uint16_t>(16);
  w.put_bytes("data", 4);
  w.put<std::uint32_t>(data_bytes);
  for (float s : wave.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    w.put<std::int16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0f)));
  }
  io::write_file_atomic(path, w.bytes());
}

std::vector<float> mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  std::vector<float> fb(static_cast<std::size_t>(n_mels) * bins, 0.0f);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= mid)
        w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb[static_cast<std::size_t>(m) * bins + k] = static_cast<float>(w);
    }
  }
  return fb;
}

FeatureSequence log_spectrogram(const Waveform& wave, const FeatureConfig& cfg, FeatureKind kind) {
  if (kind == FeatureKind::repr) throw ContractError("log_spectrogram: kind must be mel or linear");
  cfg.validate(wave.sample_rate);
  const int win = cfg.window_samples(wave.sample_rate);
  const int hop = cfg.hop_samples(wave.sample_rate);
  const std::size_t len = wave.samples.size();
  if (len < static_cast<std::size_t>(win)) {
    throw ContractError("log_spectrogram: waveform of " + std::to_string(len) +
                        " samples is shorter than one window (" + std::to_string(win) + ")");
  }
  const std::size_t frames = 1 + (len - static_cast<std::size_t>(win)) / static_cast<std::size_t>(hop);
  const int bins = cfg.n_fft / 2 + 1;

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int n = 0; n < win; ++n) window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);

  double* in = fftw_alloc_real(static_cast<std::size_t>(cfg.n_fft));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(g_fftw_planner_mutex);
    plan = fftw_plan_dft_r2c_1d(cfg.n_fft, in, out, FFTW_ESTIMATE);
  }

  const std::vector<float> fb =
      kind == FeatureKind::mel ? mel_filterbank(cfg.n_mels, cfg.n_fft, wave.sample_rate) : std::vector<float>{};
  FeatureSequence seq;
  seq.num_frames = frames;
  seq.dim = kind == FeatureKind::mel ? static_cast<std::size_t>(cfg.n_mels) : static_cast<std::size_t>(bins);
  seq.frames.resize(frames * seq.dim);
  seq.kind = kind;
  seq.sample_rate_hz = wave.sample_rate;
  seq.hop_ms = static_cast<float>(cfg.hop_ms);

  std::vector<double> power(static_cast<std::size_t>(bins));
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = wave.samples.data() + t * static_cast<std::size_t>(hop);
    for (int n = 0; n < cfg.n_fft; ++n) in[n] = n < win ? static_cast<double>(src[n]) * window[n] : 0.0;
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    auto row = seq.row(t);
    if (kind == FeatureKind::linear) {
      for (int k = 0; k < bins; ++k) row[k] = static_cast<float>(std::log(power[k] + cfg.log_floor));
    } else {
      for (int m = 0; m < cfg.n_mels; ++m) {
        double e = 0.0;
        const float* w = fb.data() + static_cast<std::size_t>(m) * bins;
        for (int k = 0; k < bins; ++k) e += w[k] * power[k];
        row[m] = static_cast<float>(std::log(e + cfg.log_floor));
      }
    }
  }
  {
    std::lock_guard<std::mutex> lock(g_fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return seq;
}

FeatureSequence cmvn(const FeatureSequence& seq) {
  if (seq.num_frames < 2) throw ContractError("cmvn: needs at least two frames");
  FeatureSequence out = seq;
  const std::size_t T = seq.num_frames, D = seq.dim;
  for (std::size_t d = 0; d < D; ++d) {
    double mu = 0.0;
    for (std::size_t t = 0; t < T; ++t) mu += seq.at(t, d);
    mu /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double c = seq.at(t, d) - mu;
      var += c * c;
    }
    var /= static_cast<double>(T);
    if (var < 1e-8) {
      for (std::size_t t = 0; t < T; ++t) out.frames[t * D + d] = 0.0f;
      continue;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t t = 0; t < T; ++t) out.frames[t * D + d] = static_cast<float>((seq.at(t, d) - mu) * inv);
  }
  return out;
}

FeatureSequence stack_frames(const FeatureSequence& seq, int r) {
  if (r <= 0) throw ContractError("stack_frames: factor must be positive, got " + std::to_string(r));
  const auto rf = static_cast<std::size_t>(r);
  FeatureSequence out = seq;
  out.num_frames = (seq.num_frames + rf - 1) / rf;
  out.dim = seq.dim * rf;
  out.stack_factor = seq.stack_factor * r;
  // Row-major layout makes stacking a reshape once T is padded.
  out.frames.assign(out.num_frames * out.dim, 0.0f);
  std::copy(seq.frames.begin(), seq.frames.end(), out.frames.begin());
  return out;
}

FeatureSequence unstack_frames(const FeatureSequence& seq) {
  FeatureSequence out = seq;
  const auto r = static_cast<std::size_t>(seq.stack_factor);
  out.num_frames = seq.num_frames * r;
  out.dim = seq.dim / r;
  out.stack_factor = 1;
  return out;
}

void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq) {
  if (seq.frames.size() != seq.num_frames * seq.dim) throw ContractError("write_feature_file: inconsistent sequence");
  if (seq.stack_factor < 1 || seq.stack_factor > 255) throw ContractError("write_feature_file: stack factor out of range");
  io::ByteWriter w;
  w.put_bytes("MAMF", 4);
  w.put<std::uint32_t>(kFeatureFileVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.num_frames));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.dim));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(seq.kind));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(seq.stack_factor));
  w.put<float>(seq.hop_ms);
  w.put_bytes(seq.frames.data(), seq.frames.size() * sizeof(float));
  io::write_file_atomic(path, w.bytes());
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "MAMF", 4) != 0) throw FormatError(path.string() + ": bad magic, not a feature file");
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureFileVersion) {
    throw FormatError(path.string() + ": unsupported feature file version " + std::to_string(version));
  }
  FeatureSequence seq;
  seq.num_frames = r.get<std::uint32_t>();
  seq.dim = r.get<std::uint32_t>();
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw FormatError(path.string() + ": unknown feature kind " + std::to_string(kind));
  seq.kind = static_cast<FeatureKind>(kind);
  seq.stack_factor = r.get<std::uint8_t>();
  seq.hop_ms = r.get<float>();
  if (seq.stack_factor < 1) throw FormatError(path.string() + ": stack factor must be at least 1");
  const std::size_t n = seq.num_frames * seq.dim;
  if (r.remaining() != n * sizeof(float)) throw FormatError(path.string() + ": payload size does not match header");
  seq.frames.resize(n);
  r.get_bytes(seq.frames.data(), n * sizeof(float));
  seq.utterance_id = path.stem().string();
  return seq;
}

}  // namespace mam::features

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

#include "mam/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "mam/error.hpp"
#include "mam/rng.hpp"

namespace mam::synth {

void SynthConfig::validate() const {
  if (utterances == 0) throw ContractError("synth: utterances must be positive");
  if (phones < 2 || speakers < 1) throw ContractError("synth: need at least 2 phones and 1 speaker");
  if (!(min_seconds > 0.05 && max_seconds >= min_seconds)) throw ContractError("synth: bad duration range");
  if (min_segment_frames < 1 || max_segment_frames < min_segment_frames)
    throw ContractError("synth: bad segment length range");
  if (sample_rate < 8000) throw ContractError("synth: sample rate too low");
  if (transition_frames < 0) throw ContractError("synth: transition_frames must be non-negative");
  if (!(formant_offset_hz >= 0)) throw ContractError("synth: formant_offset_hz must be non-negative");
  if (noise < 0) throw ContractError("synth: noise must be non-negative");
  if (!(f0_min > 0 && f0_max >= f0_min && f0_max < sample_rate / 4.0)) throw ContractError("synth: bad f0 range");
}

namespace {

struct Formant {
  double hz, width, gain;
};

struct Speaker {
  double f0;
  double tilt;  // dB per kHz
  double formant_offset = 0.0;
};

double envelope(const std::vector<Formant>& fs, double hz, double offset) {
  double a = 0.02;
  for (const auto& f : fs) {
    const double z = (hz - f.hz - offset) / f.width;
    a += f.gain * std::exp(-0.5 * z * z);
  }
  return a;
}

}  // namespace

SynthCorpus synthesize(const SynthConfig& cfg, const features::FeatureConfig& feat) {
  cfg.validate();
  feat.validate(cfg.sample_rate);
  std::mt19937_64 world(derive_seed(cfg.seed, "synth-world"));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double nyquist = cfg.sample_rate / 2.0;

  std::vector<std::vector<Formant>> phones(static_cast<std::size_t>(cfg.phones));
  for (auto& p : phones) {
    for (int k = 0; k < 3; ++k)
      p.push_back({150.0 + u01(world) * (nyquist * 0.85 - 150.0), 80.0 + 300.0 * u01(world), 0.3 + 0.7 * u01(world)});
  }
  std::vector<Speaker> speakers(static_cast<std::size_t>(cfg.speakers));
  for (auto& s : speakers) s = {cfg.f0_min + (cfg.f0_max - cfg.f0_min) * u01(world), -1.5 * u01(world)};
  if (cfg.formant_offset_hz > 0)
    for (auto& s : speakers) s.formant_offset = cfg.formant_offset_hz * (2.0 * u01(world) - 1.0);

  const int hop = feat.hop_samples(cfg.sample_rate);
  const int win = feat.window_samples(cfg.sample_rate);
  SynthCorpus out;
  out.frame_labels.num_classes = cfg.phones;
  out.speaker_labels.num_classes = cfg.speakers;
  for (std::size_t n = 0; n < cfg.utterances; ++n) {
    char id[32];
    std::snprintf(id, sizeof id, "utt%05zu", n);
    std::mt19937_64 rng(derive_seed(cfg.seed, id));
    const int spk = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.speakers));
    const Speaker& sp = speakers[static_cast<std::size_t>(spk)];
    const double seconds = cfg.min_seconds + (cfg.max_seconds - cfg.min_seconds) * u01(rng);
    const auto len = static_cast<std::size_t>(seconds * cfg.sample_rate);
    const std::size_t frames = len >= static_cast<std::size_t>(win) ? 1 + (len - win) / hop : 0;

    // Phone sequence on the frame grid, no immediate repeats.
    std::vector<int> frame_phone, frame_prev, frame_pos;
    std::uniform_int_distribution<int> seg_len(cfg.min_segment_frames, cfg.max_segment_frames);
    std::uniform_int_distribution<int> pick(0, cfg.phones - 1);
    int prev = -1;
    while (frame_phone.size() < frames + static_cast<std::size_t>(win / hop) + 2) {
      int p = pick(rng);
      while (p == prev) p = pick(rng);
      const int len_p = seg_len(rng);
      for (int k = 0; k < len_p; ++k) {
        frame_phone.push_back(p);
        frame_prev.push_back(prev);
        frame_pos.push_back(k);
      }
      prev = p;
    }

    // Harmonic synthesis: each harmonic keeps a continuous phase while its
    // amplitude follows the envelope of the current phone.
    const int n_harm = static_cast<int>((nyquist * 0.95) / sp.f0);
    std::vector<double> phase(static_cast<std::size_t>(n_harm));
    for (auto& ph : phase) ph = 2.0 * std::numbers::pi * u01(rng);
    std::vector<std::vector<double>> amp(phones.size(), std::vector<double>(static_cast<std::size_t>(n_harm)));
    for (std::size_t p = 0; p < phones.size(); ++p) {
      for (int k = 0; k < n_harm; ++k) {
        const double hz = (k + 1) * sp.f0;
        amp[p][static_cast<std::size_t>(k)] = envelope(phones[p], hz, sp.formant_offset) * std::pow(10.0, sp.tilt * hz / 1000.0 / 20.0);
      }
    }
    std::normal_distribution<double> noise(0.0, cfg.noise);
    features::Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.samples.resize(len);
    const double scale = 0.1 / std::sqrt(static_cast<double>(n_harm) * 0.1);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t f = i / static_cast<std::size_t>(hop);
      const auto& a = amp[static_cast<std::size_t>(frame_phone[f])];
      // Blend weight of the previous phone during the glide.
      double w_prev = 0.0;
      if (cfg.transition_frames > 0 && frame_prev[f] >= 0) {
        const double pos = frame_pos[f] + static_cast<double>(i % static_cast<std::size_t>(hop)) / hop;
        w_prev = std::max(0.0, 1.0 - pos / cfg.transition_frames);
      }
      const auto& b = amp[static_cast<std::size_t>(std::max(frame_prev[f], 0))];
      double s = 0.0;
      for (int k = 0; k < n_harm; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        s += ((1.0 - w_prev) * a[kk] + w_prev * b[kk]) *
             std::sin(phase[kk] + 2.0 * std::numbers::pi * (k + 1) * sp.f0 * static_cast<double>(i) / cfg.sample_rate);
      }
      w.samples[i] = static_cast<float>(std::clamp(scale * s + noise(rng), -1.0, 1.0));
    }

    // Frame t is labelled by the phone at its window centre.
    std::vector<int> labels(frames);
    for (std::size_t t = 0; t < frames; ++t)
      labels[t] = frame_phone[(t * static_cast<std::size_t>(hop) + static_cast<std::size_t>(win) / 2) /
                              static_cast<std::size_t>(hop)];
    out.ids.emplace_back(id);
    out.waves.push_back(std::move(w));
    out.frame_labels.labels[id] = std::move(labels);
    out.speaker_labels.labels[id] = spk;
  }
  return out;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir, bool with_wav) {
  std::filesystem::create_directories(dir);
  if (with_wav) {
    std::filesystem::create_directories(dir / "wav");
    for (std::size_t i = 0; i < corpus.ids.size(); ++i)
      features::write_wav(dir / "wav" / (corpus.ids[i] + ".wav"), corpus.waves[i]);
  }
  probes::write_frame_labels(dir / "frame_labels.csv", corpus.frame_labels);
  probes::write_utterance_labels(dir / "utt_labels.csv", corpus.speaker_labels);
}

}  // namespace mam::synth

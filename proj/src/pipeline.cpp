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

#include "mam/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"
#include "mam/error.hpp"
#include "mam/repr.hpp"

namespace mam::pipeline {

namespace fs = std::filesystem;
using features::FeatureKind;
using features::FeatureSequence;

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("audio directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") out.push_back(e.path());
  }
  if (out.empty()) throw ContractError("no utterances found in " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

FeatureSequence compute_features(const features::Waveform& wave, const features::FeatureConfig& cfg, FeatureKind kind,
                                 const std::string& id) {
  auto seq = features::log_spectrogram(wave, cfg, kind);
  if (cfg.cmvn) seq = features::cmvn(seq);
  seq.utterance_id = id;
  return seq;
}

namespace {

bool cache_entry_ok(const fs::path& p) {
  if (!fs::exists(p)) return false;
  try {
    features::read_feature_file(p);
    return true;
  } catch (const Error&) {
    return false;
  }
}

template <typename Source>
CacheStats fill_cache(const std::vector<std::string>& ids, const fs::path& cache_dir,
                      const features::FeatureConfig& cfg, bool with_linear, Source&& wave_of) {
  CacheStats stats;
  fs::create_directories(cache_dir / "mel");
  if (with_linear) fs::create_directories(cache_dir / "linear");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const fs::path mel = cache_dir / "mel" / (ids[i] + ".mamf");
    const fs::path lin = cache_dir / "linear" / (ids[i] + ".mamf");
    const bool need_mel = !cache_entry_ok(mel), need_lin = with_linear && !cache_entry_ok(lin);
    if (!need_mel && !need_lin) {
      ++stats.skipped;
      continue;
    }
    const features::Waveform& w = wave_of(i);
    if (need_mel) features::write_feature_file(mel, compute_features(w, cfg, FeatureKind::mel, ids[i]));
    if (need_lin) features::write_feature_file(lin, compute_features(w, cfg, FeatureKind::linear, ids[i]));
    ++stats.written;
  }
  std::string manifest;
  for (const auto& id : ids) manifest += id + "\n";
  const fs::path mpath = cache_dir / "manifest.txt";
  std::string current;
  if (fs::exists(mpath)) {
    std::ifstream in(mpath);
    current.assign(std::istreambuf_iterator<char>(in), {});
  }
  if (current != manifest) io::write_text_atomic(mpath, manifest);
  return stats;
}

}  // namespace

CacheStats build_cache(const fs::path& wav_dir, const fs::path& cache_dir, const features::FeatureConfig& cfg,
                       bool with_linear) {
  const auto wavs = list_wavs(wav_dir);
  std::vector<std::string> ids;
  for (const auto& p : wavs) ids.push_back(p.stem().string());
  features::Waveform current;
  return fill_cache(ids, cache_dir, cfg, with_linear, [&](std::size_t i) -> const features::Waveform& {
    current = features::load_wav(wavs[i]);
    return current;
  });
}

CacheStats build_cache(const std::vector<features::Waveform>& waves, const std::vector<std::string>& ids,
                       const fs::path& cache_dir, const features::FeatureConfig& cfg, bool with_linear) {
  if (waves.size() != ids.size()) throw ContractError("build_cache: one id per waveform required");
  if (waves.empty()) throw ContractError("no utterances found");
  return fill_cache(ids, cache_dir, cfg, with_linear, [&](std::size_t i) -> const features::Waveform& { return waves[i]; });
}

std::vector<std::string> read_manifest(const fs::path& cache_dir) {
  const fs::path m = cache_dir / "manifest.txt";
  if (!fs::exists(m))
    throw IoError("feature cache not found at " + cache_dir.string() +
                  "; run the `features` command first (e.g. `mam_cli features --wav-dir <dir> --cache " +
                  cache_dir.string() + "`)");
  std::ifstream in(m);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ids.push_back(line);
  if (ids.empty()) throw ContractError("no utterances found in " + m.string());
  return ids;
}

std::vector<FeatureSequence> load_cache(const fs::path& cache_dir, FeatureKind kind) {
  const auto ids = read_manifest(cache_dir);
  const fs::path sub = cache_dir / features::to_string(kind);
  std::vector<FeatureSequence> out;
  for (const auto& id : ids) {
    const fs::path p = sub / (id + ".mamf");
    if (!fs::exists(p))
      throw IoError("feature cache is missing " + p.string() + "; re-run the `features` command" +
                    (kind == FeatureKind::linear ? " with linear features enabled" : ""));
    out.push_back(features::read_feature_file(p));
  }
  return out;
}

std::vector<FeatureSequence> stack_all(const std::vector<FeatureSequence>& seqs, int r) {
  std::vector<FeatureSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(r == 1 ? s : features::stack_frames(s, r));
  return out;
}

train::Corpus make_corpus(const std::vector<FeatureSequence>& mel, const std::vector<FeatureSequence>& linear,
                          const model::EncoderConfig& cfg) {
  train::Corpus c;
  c.inputs = stack_all(mel, cfg.downsample);
  if (cfg.target_kind == model::TargetKind::linear) {
    if (linear.size() != mel.size())
      throw ContractError("the linear-spectrogram target needs linear features for every utterance");
    c.targets = stack_all(linear, cfg.downsample);
  }
  return c;
}

InputKind input_kind_from_string(const std::string& name) {
  if (name == "mel") return InputKind::mel;
  if (name == "repr-last") return InputKind::repr_last;
  if (name == "repr-weighted") return InputKind::repr_weighted;
  throw ContractError("unknown probe input '" + name + "' (expected mel, repr-last or repr-weighted)");
}

const char* to_string(InputKind kind) {
  switch (kind) {
    case InputKind::mel: return "mel";
    case InputKind::repr_last: return "repr-last";
    case InputKind::repr_weighted: return "repr-weighted";
  }
  return "?";
}

std::vector<std::vector<int>> aligned_frame_labels(const std::vector<FeatureSequence>& stacked,
                                                   const probes::FrameLabelSet& frames) {
  std::vector<std::vector<int>> out;
  for (const auto& s : stacked) {
    const auto it = frames.labels.find(s.utterance_id);
    if (it == frames.labels.end()) {
      out.emplace_back(s.num_frames, -1);
      continue;
    }
    out.push_back(probes::align_frame_labels(it->second, s.stack_factor, s.num_frames));
  }
  return out;
}

probes::ProbeDataset make_probe_dataset(const std::vector<FeatureSequence>& stacked, InputKind kind,
                                        const model::Model<float>* model, const probes::FrameLabelSet* frames,
                                        const probes::UtteranceLabelSet* utterances) {
  if (kind != InputKind::mel && !model) throw ContractError("representation probes need a checkpoint");
  probes::ProbeDataset data;
  for (const auto& s : stacked) {
    probes::ProbeUtterance u;
    u.id = s.utterance_id;
    if (frames) {
      const auto it = frames->labels.find(s.utterance_id);
      if (it == frames->labels.end()) continue;
      u.frame_labels = probes::align_frame_labels(it->second, s.stack_factor, s.num_frames);
    }
    if (utterances) {
      const auto it = utterances->labels.find(s.utterance_id);
      if (it == utterances->labels.end()) continue;
      u.label = it->second;
    }
    if (kind == InputKind::mel) {
      u.layers.emplace_back(Shape{s.num_frames, s.dim}, s.frames);
    } else {
      auto stack = repr::encode_utterance(*model, s);
      if (kind == InputKind::repr_last)
        u.layers.push_back(repr::extract_last(stack));
      else
        u.layers = std::move(stack);
    }
    data.push_back(std::move(u));
  }
  if (data.empty()) throw ContractError("no cached utterance has a matching label");
  return data;
}

}  // namespace mam::pipeline

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

#include "mam/mam.h"

#include <cstdio>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "mam/checkpoint.hpp"
#include "mam/error.hpp"
#include "mam/features.hpp"
#include "mam/model.hpp"
#include "mam/optim.hpp"
#include "mam/pipeline.hpp"
#include "mam/probes.hpp"
#include "mam/repr.hpp"
#include "mam/synth.hpp"
#include "mam/train.hpp"

struct mam_model {
  mam::model::Model<float> model;
};

namespace {

namespace fs = std::filesystem;
using namespace mam;

thread_local std::string g_last_error;

class ArgumentError : public Error {
 public:
  using Error::Error;
};

template <typename Fn>
mam_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return MAM_OK;
  } catch (const ArgumentError& e) {
    g_last_error = e.what();
    return MAM_ERR_ARGUMENT;
  } catch (const DimensionError& e) {
    g_last_error = e.what();
    return MAM_ERR_DIMENSION;
  } catch (const ContractError& e) {
    g_last_error = e.what();
    return MAM_ERR_CONTRACT;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return MAM_ERR_NUMERIC;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return MAM_ERR_IO;
  } catch (const FormatError& e) {
    g_last_error = e.what();
    return MAM_ERR_FORMAT;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return MAM_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MAM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MAM_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " must not be NULL");
}

std::string str_or(const char* s, const char* fallback) { return s ? s : fallback; }

features::FeatureConfig to_feature_config(const mam_feature_config& c) {
  features::FeatureConfig f;
  f.n_fft = c.n_fft;
  f.window_ms = c.window_ms;
  f.hop_ms = c.hop_ms;
  f.n_mels = c.n_mels;
  f.cmvn = c.cmvn != 0;
  return f;
}

model::EncoderConfig resolve_encoder(const mam_encoder_config& c, std::size_t mel_dim, std::size_t linear_dim) {
  const std::string name = str_or(c.preset, "base");
  if (name != "base" && name != "large" && name != "tiny")
    throw ArgumentError("unknown preset '" + name + "' (expected base, large or tiny)");
  auto e = model::EncoderConfig::preset(name, mel_dim, linear_dim);
  if (c.hidden_dim) e.hidden_dim = c.hidden_dim;
  if (c.ff_dim) e.ff_dim = c.ff_dim;
  if (c.heads) e.heads = c.heads;
  if (c.layers) e.layers = c.layers;
  if (c.downsample) {
    e.downsample = c.downsample;
    e.input_dim = mel_dim * static_cast<std::size_t>(c.downsample);
    e.target_dim = (e.target_kind == model::TargetKind::linear ? linear_dim : mel_dim) *
                   static_cast<std::size_t>(c.downsample);
  }
  if (c.consecutive) e.consecutive = c.consecutive;
  if (c.dropout >= 0.0) e.dropout = c.dropout;
  if (c.max_steps) e.max_steps = c.max_steps;
  e.validate();
  return e;
}

probes::Readout readout_from(const char* s) {
  const std::string r = str_or(s, "last");
  if (r == "last") return probes::Readout::last;
  if (r == "mean") return probes::Readout::mean;
  throw ArgumentError("unknown readout '" + r + "' (expected last or mean)");
}

void save_mixer(const repr::WeightedSumMixer<float>& mixer, const fs::path& path) {
  checkpoint::Checkpoint ck;
  ck.add(checkpoint::NamedTensor::floats("mixer.logits", mixer.logits.shape(),
                                         {mixer.logits.data().begin(), mixer.logits.data().end()}));
  ck.add(checkpoint::NamedTensor::floats("mixer.gamma", Shape{1}, {mixer.gamma[0]}));
  checkpoint::save_checkpoint(ck, path);
}

repr::WeightedSumMixer<float> load_mixer(const fs::path& path, std::size_t layers) {
  const auto ck = checkpoint::load_checkpoint(path);
  const auto& logits = ck.get("mixer.logits");
  if (logits.f32.size() != layers)
    throw DimensionError("mixer '" + path.string() + "' has " + std::to_string(logits.f32.size()) +
                         " layer weights, the model has " + std::to_string(layers) + " layers");
  return repr::WeightedSumMixer<float>(logits.f32, ck.get("mixer.gamma").f32.at(0));
}

}  // namespace

extern "C" {

const char* mam_last_error(void) { return g_last_error.c_str(); }

const char* mam_status_string(mam_status status) {
  switch (status) {
    case MAM_OK: return "ok";
    case MAM_ERR_ARGUMENT: return "invalid argument";
    case MAM_ERR_DIMENSION: return "dimension mismatch";
    case MAM_ERR_CONTRACT: return "precondition violated";
    case MAM_ERR_NUMERIC: return "non-finite value";
    case MAM_ERR_IO: return "i/o error";
    case MAM_ERR_FORMAT: return "malformed file";
    case MAM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* mam_version(void) { return "1.0.0"; }

void mam_feature_config_default(mam_feature_config* cfg) {
  if (!cfg) return;
  const features::FeatureConfig d;
  *cfg = {d.n_fft, d.window_ms, d.hop_ms, d.n_mels, d.cmvn ? 1 : 0, 0};
}

mam_status mam_features_from_dir(const char* wav_dir, const char* cache_dir, const mam_feature_config* cfg,
                                 size_t* written, size_t* skipped) {
  return guarded([&] {
    require(wav_dir, "wav_dir");
    require(cache_dir, "cache_dir");
    mam_feature_config c;
    mam_feature_config_default(&c);
    if (cfg) c = *cfg;
    const auto stats = pipeline::build_cache(wav_dir, cache_dir, to_feature_config(c), c.with_linear != 0);
    if (written) *written = stats.written;
    if (skipped) *skipped = stats.skipped;
  });
}

void mam_synth_config_default(mam_synth_config* cfg) {
  if (!cfg) return;
  const synth::SynthConfig d;
  *cfg = {d.utterances, d.phones, d.speakers, d.min_seconds, d.max_seconds, d.noise, d.transition_frames,
          d.formant_offset_hz, d.seed, 1, nullptr};
}

mam_status mam_synth_corpus(const mam_synth_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    synth::SynthConfig s;
    s.utterances = cfg->utterances;
    s.phones = cfg->phones;
    s.speakers = cfg->speakers;
    s.min_seconds = cfg->min_seconds;
    s.max_seconds = cfg->max_seconds;
    s.noise = cfg->noise;
    s.transition_frames = cfg->transition_frames;
    s.formant_offset_hz = cfg->formant_offset_hz;
    s.seed = cfg->seed;
    const auto corpus = synth::synthesize(s);
    synth::write_corpus(corpus, out_dir, cfg->write_wav != 0);
    if (cfg->cache_dir) pipeline::build_cache(corpus.waves, corpus.ids, cfg->cache_dir, {}, true);
  });
}

void mam_encoder_config_default(mam_encoder_config* cfg) {
  if (!cfg) return;
  *cfg = {"base", 0, 0, 0, 0, 0, 0, -1.0, 0};
}

mam_status mam_resolve_encoder(const mam_encoder_config* cfg, size_t mel_dim, size_t linear_dim,
                               mam_model_info* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    const auto c = resolve_encoder(*cfg, mel_dim, linear_dim);
    *out = {c.hidden_dim, c.ff_dim,        c.heads,
            c.layers,     c.input_dim,     c.target_dim,
            c.downsample, c.consecutive,   model::count_parameters(c)};
  });
}

mam_status mam_count_parameters(const mam_encoder_config* cfg, uint64_t* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = model::count_parameters(resolve_encoder(*cfg, 160, 201));
  });
}

mam_status mam_model_create(const mam_encoder_config* cfg, uint64_t seed, mam_model** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = new mam_model{model::Model<float>(resolve_encoder(*cfg, 160, 201), seed, true)};
  });
}

mam_status mam_model_load(const char* checkpoint_path, mam_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    *out = new mam_model{train::load_model(checkpoint_path)};
  });
}

mam_status mam_model_save(const mam_model* m, const char* checkpoint_path) {
  return guarded([&] {
    require(m, "model");
    require(checkpoint_path, "checkpoint_path");
    checkpoint::save_checkpoint(train::to_checkpoint(m->model, nullptr, 0), checkpoint_path);
  });
}

void mam_model_free(mam_model* m) { delete m; }

mam_status mam_model_info_get(const mam_model* m, mam_model_info* out) {
  return guarded([&] {
    require(m, "model");
    require(out, "out");
    const auto& c = m->model.config();
    *out = {c.hidden_dim, c.ff_dim,        c.heads,
            c.layers,     c.input_dim,     c.target_dim,
            c.downsample, c.consecutive,   m->model.encoder_parameter_count()};
  });
}

mam_status mam_model_encode(const mam_model* m, const float* frames, size_t steps, size_t input_dim, float* out,
                            size_t out_len) {
  return guarded([&] {
    require(m, "model");
    require(frames, "frames");
    require(out, "out");
    const auto& c = m->model.config();
    if (input_dim != c.input_dim)
      throw DimensionError("frames have dimension " + std::to_string(input_dim) + ", the model expects " +
                           std::to_string(c.input_dim));
    const std::size_t need = c.layers * steps * c.hidden_dim;
    if (out_len < need) throw ArgumentError("output buffer holds " + std::to_string(out_len) + " floats, " +
                                            std::to_string(need) + " needed");
    features::FeatureSequence seq;
    seq.num_frames = steps;
    seq.dim = input_dim;
    seq.frames.assign(frames, frames + steps * input_dim);
    const auto stack = repr::encode_utterance(m->model, seq);
    for (std::size_t l = 0; l < stack.size(); ++l)
      std::copy(stack[l].data().begin(), stack[l].data().end(), out + l * steps * c.hidden_dim);
  });
}

mam_status mam_lr_at(uint64_t step, uint64_t total_steps, double warmup_fraction, double peak_lr, double* out) {
  return guarded([&] {
    require(out, "out");
    optim::TrainSchedule s;
    s.total_steps = total_steps;
    s.warmup_fraction = warmup_fraction;
    s.peak_lr = peak_lr;
    *out = optim::lr_at(step, s);
  });
}

void mam_pretrain_config_default(mam_pretrain_config* cfg) {
  if (!cfg) return;
  const optim::TrainSchedule s;
  const masking::MaskPolicy p;
  *cfg = {};
  mam_encoder_config_default(&cfg->encoder);
  cfg->mask_proportion = p.mask_proportion;
  cfg->total_steps = s.total_steps;
  cfg->warmup_fraction = s.warmup_fraction;
  cfg->peak_lr = s.peak_lr;
  cfg->batch_size = s.batch_size;
  cfg->clip_norm = 1.0;
}

mam_status mam_pretrain(const mam_pretrain_config* cfg, mam_train_summary* summary) {
  return guarded([&] {
    require(cfg, "cfg");
    require(cfg->cache_dir, "cache_dir");
    const auto mel = pipeline::load_cache(cfg->cache_dir, features::FeatureKind::mel);
    const std::size_t mel_dim = mel.front().dim;
    const std::string preset = str_or(cfg->encoder.preset, "base");
    std::vector<features::FeatureSequence> linear;
    auto enc = resolve_encoder(cfg->encoder, mel_dim, 201);
    if (enc.target_kind == model::TargetKind::linear) {
      linear = pipeline::load_cache(cfg->cache_dir, features::FeatureKind::linear);
      enc = resolve_encoder(cfg->encoder, mel_dim, linear.front().dim);
    }
    train::PretrainOptions o;
    o.encoder = enc;
    o.policy.mask_proportion = cfg->mask_proportion;
    o.policy.consecutive = enc.consecutive;
    o.schedule.total_steps = cfg->total_steps;
    o.schedule.warmup_fraction = cfg->warmup_fraction;
    o.schedule.peak_lr = cfg->peak_lr;
    o.schedule.batch_size = cfg->batch_size;
    o.schedule.dropout = enc.dropout;
    o.clip_norm = cfg->clip_norm;
    o.checkpoint_every = cfg->checkpoint_every;
    o.stop_after = cfg->stop_after;
    o.seed = cfg->seed;
    if (cfg->out_dir) o.out_dir = cfg->out_dir;
    if (cfg->resume_from) o.resume_from = fs::path(cfg->resume_from);
    if (cfg->verbose) {
      const std::uint64_t every = std::max<std::uint64_t>(1, cfg->total_steps / 100);
      o.on_step = [every](const train::LossRecord& r) {
        if (r.step % every == 0 || r.step == 1)
          std::fprintf(stderr, "step %llu  lr %.3g  loss %.5f  |g| %.4f\n", static_cast<unsigned long long>(r.step),
                       r.lr, r.loss, r.grad_norm);
      };
    }
    const auto st = train::pretrain(pipeline::make_corpus(mel, linear, enc), o);
    if (summary) {
      summary->steps = st.step;
      summary->first_loss = st.log.empty() ? 0.0 : st.log.front().loss;
      summary->last_loss = st.log.empty() ? 0.0 : st.log.back().loss;
    }
  });
}

void mam_extract_config_default(mam_extract_config* cfg) {
  if (!cfg) return;
  *cfg = {nullptr, nullptr, nullptr, "last", nullptr};
}

mam_status mam_extract(const mam_extract_config* cfg, size_t* written, int* uniform_mixer) {
  return guarded([&] {
    require(cfg, "cfg");
    require(cfg->cache_dir, "cache_dir");
    require(cfg->checkpoint, "checkpoint");
    require(cfg->out_dir, "out_dir");
    const auto mode = repr::mode_from_string(str_or(cfg->mode, "last"));
    const auto m = train::load_model(cfg->checkpoint);
    const auto inputs = pipeline::stack_all(pipeline::load_cache(cfg->cache_dir, features::FeatureKind::mel),
                                            m.config().downsample);
    repr::WeightedSumMixer<float> mixer(m.config().layers);
    const bool uniform = mode == repr::Mode::weighted && !cfg->mixer_path;
    if (mode == repr::Mode::weighted && cfg->mixer_path) mixer = load_mixer(cfg->mixer_path, m.config().layers);
    repr::dump_representations(inputs, m, mode, mixer, cfg->out_dir);
    if (written) *written = inputs.size();
    if (uniform_mixer) *uniform_mixer = uniform ? 1 : 0;
  });
}

void mam_probe_config_default(mam_probe_config* cfg) {
  if (!cfg) return;
  const probes::ProbeConfig p;
  *cfg = {};
  cfg->input = "mel";
  cfg->task = "frame";
  cfg->lr = p.lr;
  cfg->max_epochs = p.max_epochs;
  cfg->patience = p.patience;
  cfg->rnn_hidden = p.rnn_hidden;
  cfg->readout = "last";
}

mam_status mam_probe(const mam_probe_config* cfg, double* accuracies, size_t accuracies_len) {
  return guarded([&] {
    require(cfg, "cfg");
    require(cfg->cache_dir, "cache_dir");
    require(cfg->labels, "labels");
    const auto kind = pipeline::input_kind_from_string(str_or(cfg->input, "mel"));
    const std::string task = str_or(cfg->task, "frame");
    if (task != "frame" && task != "utterance") throw ArgumentError("unknown task '" + task + "'");
    std::optional<model::Model<float>> m;
    int r = 1;
    if (kind != pipeline::InputKind::mel) {
      if (!cfg->checkpoint) throw ArgumentError("input '" + std::string(cfg->input) + "' needs a checkpoint");
      m.emplace(train::load_model(cfg->checkpoint));
      r = m->config().downsample;
    }
    const auto inputs = pipeline::stack_all(pipeline::load_cache(cfg->cache_dir, features::FeatureKind::mel), r);
    probes::ProbeConfig pc;
    pc.lr = cfg->lr;
    pc.max_epochs = cfg->max_epochs;
    pc.patience = cfg->patience;
    pc.rnn_hidden = cfg->rnn_hidden;
    pc.readout = readout_from(cfg->readout);
    pc.seed = cfg->seed;
    const std::string kind_name = pipeline::to_string(kind);
    std::vector<probes::ProbeReport> reports;
    if (task == "frame") {
      const auto labels = probes::read_frame_labels(cfg->labels, cfg->num_classes);
      const auto data = pipeline::make_probe_dataset(inputs, kind, m ? &*m : nullptr, &labels, nullptr);
      const auto split = probes::split_utterances(data.size(), pc.test_fraction, pc.valid_fraction, pc.seed);
      std::vector<double> budgets{1.0};
      if (cfg->budgets && cfg->num_budgets) budgets.assign(cfg->budgets, cfg->budgets + cfg->num_budgets);
      reports = probes::low_resource_sweep(data, split, budgets, labels.num_classes, pc, kind_name);
    } else {
      const auto labels = probes::read_utterance_labels(cfg->labels, cfg->num_classes);
      const auto data = pipeline::make_probe_dataset(inputs, kind, m ? &*m : nullptr, nullptr, &labels);
      reports.push_back(probes::train_rnn_utterance_probe(data, labels.num_classes, pc, kind_name));
    }
    if (accuracies) {
      if (accuracies_len < reports.size()) throw ArgumentError("accuracies buffer too small");
      for (std::size_t i = 0; i < reports.size(); ++i) accuracies[i] = reports[i].accuracy;
    }
    if (cfg->report_csv) probes::append_reports_csv(cfg->report_csv, reports);
    if (cfg->table_path) probes::write_sweep_table(cfg->table_path, reports);
    if (cfg->mixer_out && kind == pipeline::InputKind::repr_weighted) {
      const auto& w = reports.back().mixer_weights;
      std::vector<float> logits;
      for (double v : w) logits.push_back(static_cast<float>(std::log(std::max(v, 1e-30))));
      save_mixer(repr::WeightedSumMixer<float>(logits, static_cast<float>(reports.back().mixer_gamma)),
                 cfg->mixer_out);
    }
  });
}

void mam_finetune_config_default(mam_finetune_config* cfg) {
  if (!cfg) return;
  const auto s = optim::TrainSchedule::finetuning();
  const probes::ProbeConfig p;
  *cfg = {};
  cfg->task = "frame";
  cfg->budget = 1.0;
  cfg->epochs = 2;
  cfg->peak_lr = s.peak_lr;
  cfg->warmup_fraction = s.warmup_fraction;
  cfg->batch_size = s.batch_size;
  cfg->encoder_lr_scale = 1.0;
  cfg->rnn_hidden = p.rnn_hidden;
  cfg->readout = "last";
}

mam_status mam_finetune(const mam_finetune_config* cfg, mam_finetune_summary* summary) {
  return guarded([&] {
    require(cfg, "cfg");
    require(cfg->cache_dir, "cache_dir");
    require(cfg->checkpoint, "checkpoint");
    require(cfg->labels, "labels");
    const std::string task = str_or(cfg->task, "frame");
    if (task != "frame" && task != "utterance") throw ArgumentError("unknown task '" + task + "'");
    auto m = train::load_model(cfg->checkpoint);
    const auto inputs = pipeline::stack_all(pipeline::load_cache(cfg->cache_dir, features::FeatureKind::mel),
                                            m.config().downsample);
    train::FinetuneOptions o;
    o.schedule.peak_lr = cfg->peak_lr;
    o.schedule.warmup_fraction = cfg->warmup_fraction;
    o.schedule.batch_size = cfg->batch_size;
    o.epochs = cfg->epochs;
    o.encoder_lr_scale = cfg->encoder_lr_scale;
    o.seed = cfg->seed;
    o.probe.seed = cfg->seed;
    o.probe.rnn_hidden = cfg->rnn_hidden;
    o.probe.readout = readout_from(cfg->readout);
    train::FinetuneResult res;
    if (task == "frame") {
      const auto labels = probes::read_frame_labels(cfg->labels, cfg->num_classes);
      std::vector<features::FeatureSequence> kept;
      for (const auto& s : inputs)
        if (labels.labels.count(s.utterance_id)) kept.push_back(s);
      if (kept.empty()) throw ContractError("no cached utterance has a matching label");
      const auto aligned = pipeline::aligned_frame_labels(kept, labels);
      const auto split = probes::split_utterances(kept.size(), o.probe.test_fraction, o.probe.valid_fraction,
                                                  o.probe.seed);
      res = train::finetune_frames(m, kept, aligned, split, cfg->budget, labels.num_classes, o);
    } else {
      const auto labels = probes::read_utterance_labels(cfg->labels, cfg->num_classes);
      std::vector<features::FeatureSequence> kept;
      std::vector<int> y;
      for (const auto& s : inputs) {
        const auto it = labels.labels.find(s.utterance_id);
        if (it == labels.labels.end()) continue;
        kept.push_back(s);
        y.push_back(it->second);
      }
      if (kept.empty()) throw ContractError("no cached utterance has a matching label");
      res = train::finetune_utterances(m, kept, y, labels.num_classes, o);
    }
    if (cfg->report_csv) probes::append_reports_csv(cfg->report_csv, std::span(&res.report, 1));
    if (cfg->log_csv) train::write_loss_log(cfg->log_csv, res.log);
    if (cfg->out_checkpoint)
      checkpoint::save_checkpoint(train::to_checkpoint(m, nullptr, res.log.size()), cfg->out_checkpoint);
    if (summary) *summary = {res.report.accuracy, static_cast<uint64_t>(res.log.size())};
  });
}

}  // extern "C"

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

// mam_cli: features | synth | pretrain | extract | probe | finetune
//
// Every subcommand takes --config FILE with key=value lines named after its
// long options (unknown keys are an error; lists may be written [a,b,c]). Flags on the command line win
// over the file, which wins over preset defaults. The resolved settings are
// written as resolved_config.ini next to the command's outputs.

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mam/mam.h"

namespace fs = std::filesystem;

namespace {

int fail(mam_status st) {
  std::fprintf(stderr, "error: %s: %s\n", mam_status_string(st), mam_last_error());
  return static_cast<int>(st);
}

void add_config(CLI::App* cmd) {
  cmd->add_option("--config", "key=value settings file; command-line flags take precedence")->type_name("FILE")->configurable(false);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

// Splices the key=value lines of `--config FILE` into the argument list in
// front of the command-line flags. Keys already given on the command line
// are skipped; keys that are not options of the subcommand are an error.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return args;
  const CLI::App* cmd = nullptr;
  try {
    cmd = app.get_subcommand(args[0]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  auto given = [&](const std::string& key) {
    for (const auto& a : rest)
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> spliced{args[0]};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const CLI::Option* opt = key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
    if (!opt) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "' for " +
                                       cmd->get_name());
    if (given(key)) continue;
    if (opt->get_expected_min() == 0) {
      const std::string v = unquote(value);
      if (v == "true" || v == "1" || v == "yes" || v == "on") spliced.push_back("--" + key);
      else if (!(v == "false" || v == "0" || v == "no" || v == "off"))
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": '" + key + "' expects true or false");
      continue;
    }
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    std::vector<std::string> items;
    if (opt->get_items_expected_max() > 1) {
      std::string item;
      for (char c : value + ",") {
        if (c == ',' || c == ' ') {
          if (!trim(item).empty()) items.push_back(unquote(item));
          item.clear();
        } else {
          item += c;
        }
      }
    } else {
      items.push_back(unquote(value));
    }
    spliced.push_back("--" + key);
    for (auto& it : items) spliced.push_back(it);
  }
  spliced.insert(spliced.end(), rest.begin(), rest.end());
  return spliced;
}

void write_snapshot(const CLI::App* cmd, const fs::path& dir, const std::string& extra = "") {
  fs::create_directories(dir);
  const fs::path tmp = dir / "resolved_config.ini.tmp";
  {
    std::ofstream out(tmp);
    out << "# mam_cli " << cmd->get_name() << " (library " << mam_version() << ")\n";
    out << cmd->config_to_str(true, false);
    out << extra;
  }
  fs::rename(tmp, dir / "resolved_config.ini");
}

const char* opt_str(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

struct EncoderFlags {
  std::string preset = "base";
  std::size_t hidden = 0, ff = 0, heads = 0, layers = 0, max_steps = 0;
  int downsample = 0, consecutive = 0;
  double dropout = -1.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Encoder preset")
        ->check(CLI::IsMember({"base", "large", "tiny"}))
        ->capture_default_str();
    cmd->add_option("--hidden", hidden, "Hidden size (0 = preset)");
    cmd->add_option("--ff", ff, "Feed-forward size (0 = preset)");
    cmd->add_option("--heads", heads, "Attention heads (0 = preset)");
    cmd->add_option("--layers", layers, "Encoder layers (0 = preset)");
    cmd->add_option("--downsample", downsample, "Frames stacked per step (0 = preset)");
    cmd->add_option("--consecutive", consecutive, "Frames per masked block (0 = preset)");
    cmd->add_option("--dropout", dropout, "Dropout (negative = preset)");
    cmd->add_option("--max-steps", max_steps, "Longest accepted sequence (0 = preset)");
  }
  mam_encoder_config get() const {
    mam_encoder_config c;
    mam_encoder_config_default(&c);
    c.preset = preset.c_str();
    c.hidden_dim = hidden;
    c.ff_dim = ff;
    c.heads = heads;
    c.layers = layers;
    c.downsample = downsample;
    c.consecutive = consecutive;
    c.dropout = dropout;
    c.max_steps = max_steps;
    return c;
  }
};

std::string resolved_encoder(const mam_encoder_config& c) {
  mam_model_info info{};
  if (mam_resolve_encoder(&c, 160, 201, &info) != MAM_OK) return "";
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# resolved encoder (160 Mel / 201 linear bins): hidden=%zu ff=%zu heads=%zu layers=%zu "
                "downsample=%d consecutive=%d input_dim=%zu target_dim=%zu encoder_parameters=%llu\n",
                info.hidden_dim, info.ff_dim, info.heads, info.layers, info.downsample, info.consecutive,
                info.input_dim, info.target_dim, static_cast<unsigned long long>(info.encoder_parameters));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked acoustic model pre-training, extraction and probing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mam_version()));

  // features
  auto* features = app.add_subcommand("features", "Build the feature cache from a directory of WAV files");
  add_config(features);
  std::string wav_dir, cache_dir;
  mam_feature_config fcfg;
  mam_feature_config_default(&fcfg);
  bool no_cmvn = false, linear = false;
  features->add_option("--wav-dir", wav_dir, "Directory of .wav files")->required();
  features->add_option("--cache", cache_dir, "Feature cache directory")->required();
  features->add_option("--n-fft", fcfg.n_fft, "FFT size")->capture_default_str();
  features->add_option("--window-ms", fcfg.window_ms, "Window length")->capture_default_str();
  features->add_option("--hop-ms", fcfg.hop_ms, "Hop length")->capture_default_str();
  features->add_option("--n-mels", fcfg.n_mels, "Mel bands")->capture_default_str();
  features->add_flag("--no-cmvn", no_cmvn, "Skip per-utterance mean/variance normalisation");
  features->add_flag("--linear", linear, "Also cache log-linear spectrograms (needed by the large preset)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic corpus");
  add_config(synth);
  std::string synth_out, synth_cache;
  mam_synth_config scfg;
  mam_synth_config_default(&scfg);
  bool no_wav = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--cache", synth_cache, "Also build a feature cache here");
  synth->add_option("--utterances", scfg.utterances)->capture_default_str();
  synth->add_option("--phones", scfg.phones)->capture_default_str();
  synth->add_option("--speakers", scfg.speakers)->capture_default_str();
  synth->add_option("--min-seconds", scfg.min_seconds)->capture_default_str();
  synth->add_option("--max-seconds", scfg.max_seconds)->capture_default_str();
  synth->add_option("--noise", scfg.noise)->capture_default_str();
  synth->add_option("--formant-offset", scfg.formant_offset_hz, "Per-speaker formant shift range in Hz")
      ->capture_default_str();
  synth->add_option("--transition-frames", scfg.transition_frames, "Envelope glide at segment starts")
      ->capture_default_str();
  synth->add_option("--seed", scfg.seed)->capture_default_str();
  synth->add_flag("--no-wav", no_wav, "Do not write WAV files");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Masked acoustic model pre-training");
  add_config(pretrain);
  std::string pt_cache, pt_out, pt_resume;
  EncoderFlags pt_enc;
  mam_pretrain_config pcfg;
  mam_pretrain_config_default(&pcfg);
  bool quiet = false;
  pretrain->add_option("--cache", pt_cache, "Feature cache directory")->required();
  pretrain->add_option("--out", pt_out, "Checkpoint / log directory")->required();
  pt_enc.add(pretrain);
  pretrain->add_option("--mask-proportion", pcfg.mask_proportion)->capture_default_str();
  pretrain->add_option("--total-steps", pcfg.total_steps)->capture_default_str();
  pretrain->add_option("--warmup", pcfg.warmup_fraction, "Warmup fraction")->capture_default_str();
  pretrain->add_option("--lr", pcfg.peak_lr, "Peak learning rate")->capture_default_str();
  pretrain->add_option("--batch-size", pcfg.batch_size)->capture_default_str();
  pretrain->add_option("--clip", pcfg.clip_norm, "Global gradient-norm clip (0 disables)")->capture_default_str();
  pretrain->add_option("--checkpoint-every", pcfg.checkpoint_every)->capture_default_str();
  pretrain->add_option("--stop-after", pcfg.stop_after, "Stop after this many steps (0 = total)");
  pretrain->add_option("--seed", pcfg.seed)->capture_default_str();
  pretrain->add_option("--resume", pt_resume, "Checkpoint to resume from");
  pretrain->add_flag("--quiet", quiet, "No progress output");

  // extract
  auto* extract = app.add_subcommand("extract", "Dump representations as feature files");
  add_config(extract);
  std::string ex_cache, ex_ckpt, ex_out, ex_mode = "last", ex_mixer;
  extract->add_option("--cache", ex_cache, "Feature cache directory")->required();
  extract->add_option("--checkpoint", ex_ckpt)->required();
  extract->add_option("--out", ex_out)->required();
  extract->add_option("--mode", ex_mode)->check(CLI::IsMember({"last", "weighted"}))->capture_default_str();
  extract->add_option("--mixer", ex_mixer, "Trained mixer (weighted mode)");

  // probe
  auto* probe = app.add_subcommand("probe", "Train a probe on raw features or representations");
  add_config(probe);
  std::string pr_cache, pr_ckpt, pr_input = "mel", pr_task = "frame", pr_labels, pr_out, pr_readout = "last";
  std::vector<double> pr_budgets{1.0};
  mam_probe_config prcfg;
  mam_probe_config_default(&prcfg);
  probe->add_option("--cache", pr_cache)->required();
  probe->add_option("--checkpoint", pr_ckpt, "Needed for repr inputs");
  probe->add_option("--input", pr_input)
      ->check(CLI::IsMember({"mel", "repr-last", "repr-weighted"}))
      ->capture_default_str();
  probe->add_option("--task", pr_task)->check(CLI::IsMember({"frame", "utterance"}))->capture_default_str();
  probe->add_option("--labels", pr_labels, "Label CSV")->required();
  probe->add_option("--classes", prcfg.num_classes, "Class count (0 = infer)");
  probe->add_option("--budget", pr_budgets, "Label budgets (frame task)")->capture_default_str();
  probe->add_option("--lr", prcfg.lr)->capture_default_str();
  probe->add_option("--epochs", prcfg.max_epochs)->capture_default_str();
  probe->add_option("--patience", prcfg.patience)->capture_default_str();
  probe->add_option("--rnn-hidden", prcfg.rnn_hidden)->capture_default_str();
  probe->add_option("--readout", pr_readout)->check(CLI::IsMember({"last", "mean"}))->capture_default_str();
  probe->add_option("--seed", prcfg.seed)->capture_default_str();
  probe->add_option("--out", pr_out, "Output directory (report.csv, sweep.csv)")->required();

  // finetune
  auto* finetune = app.add_subcommand("finetune", "Jointly train the encoder and a downstream model");
  add_config(finetune);
  std::string ft_cache, ft_ckpt, ft_task = "frame", ft_labels, ft_out, ft_readout = "last";
  mam_finetune_config ftcfg;
  mam_finetune_config_default(&ftcfg);
  finetune->add_option("--cache", ft_cache)->required();
  finetune->add_option("--checkpoint", ft_ckpt)->required();
  finetune->add_option("--task", ft_task)->check(CLI::IsMember({"frame", "utterance"}))->capture_default_str();
  finetune->add_option("--labels", ft_labels)->required();
  finetune->add_option("--classes", ftcfg.num_classes, "Class count (0 = infer)");
  finetune->add_option("--budget", ftcfg.budget, "Label budget (frame task)")->capture_default_str();
  finetune->add_option("--epochs", ftcfg.epochs)->capture_default_str();
  finetune->add_option("--lr", ftcfg.peak_lr, "Peak learning rate")->capture_default_str();
  finetune->add_option("--warmup", ftcfg.warmup_fraction)->capture_default_str();
  finetune->add_option("--batch-size", ftcfg.batch_size)->capture_default_str();
  finetune->add_option("--encoder-lr-scale", ftcfg.encoder_lr_scale, "0 freezes the encoder")->capture_default_str();
  finetune->add_option("--rnn-hidden", ftcfg.rnn_hidden)->capture_default_str();
  finetune->add_option("--readout", ft_readout)->check(CLI::IsMember({"last", "mean"}))->capture_default_str();
  finetune->add_option("--seed", ftcfg.seed)->capture_default_str();
  finetune->add_option("--out", ft_out, "Output directory")->required();

  try {
    auto args = expand_config(app, argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return MAM_ERR_ARGUMENT;
  }

  try {
    if (*features) {
      fcfg.cmvn = no_cmvn ? 0 : 1;
      fcfg.with_linear = linear ? 1 : 0;
      size_t written = 0, skipped = 0;
      if (auto st = mam_features_from_dir(wav_dir.c_str(), cache_dir.c_str(), &fcfg, &written, &skipped)) return fail(st);
      write_snapshot(features, cache_dir);
      std::printf("features: %zu written, %zu already cached\n", written, skipped);
      return 0;
    }
    if (*synth) {
      scfg.write_wav = no_wav ? 0 : 1;
      scfg.cache_dir = opt_str(synth_cache);
      if (auto st = mam_synth_corpus(&scfg, synth_out.c_str())) return fail(st);
      write_snapshot(synth, synth_out);
      std::printf("synth: %zu utterances in %s\n", scfg.utterances, synth_out.c_str());
      return 0;
    }
    if (*pretrain) {
      pcfg.cache_dir = pt_cache.c_str();
      pcfg.out_dir = pt_out.c_str();
      pcfg.encoder = pt_enc.get();
      pcfg.resume_from = opt_str(pt_resume);
      pcfg.verbose = quiet ? 0 : 1;
      write_snapshot(pretrain, pt_out, resolved_encoder(pcfg.encoder));
      mam_train_summary sum{};
      if (auto st = mam_pretrain(&pcfg, &sum)) return fail(st);
      std::printf("pretrain: %llu steps, loss %.5f -> %.5f, checkpoint %s\n",
                  static_cast<unsigned long long>(sum.steps), sum.first_loss, sum.last_loss,
                  (fs::path(pt_out) / "last.mamc").c_str());
      return 0;
    }
    if (*extract) {
      mam_extract_config ecfg;
      mam_extract_config_default(&ecfg);
      ecfg.cache_dir = ex_cache.c_str();
      ecfg.checkpoint = ex_ckpt.c_str();
      ecfg.out_dir = ex_out.c_str();
      ecfg.mode = ex_mode.c_str();
      ecfg.mixer_path = opt_str(ex_mixer);
      size_t written = 0;
      int uniform = 0;
      if (auto st = mam_extract(&ecfg, &written, &uniform)) return fail(st);
      write_snapshot(extract, ex_out);
      if (uniform) std::printf("extract: no trained mixer given, using uniform layer weights\n");
      std::printf("extract: %zu representation files in %s\n", written, ex_out.c_str());
      return 0;
    }
    if (*probe) {
      prcfg.cache_dir = pr_cache.c_str();
      prcfg.checkpoint = opt_str(pr_ckpt);
      prcfg.input = pr_input.c_str();
      prcfg.task = pr_task.c_str();
      prcfg.labels = pr_labels.c_str();
      prcfg.budgets = pr_budgets.data();
      prcfg.num_budgets = pr_budgets.size();
      prcfg.readout = pr_readout.c_str();
      fs::create_directories(pr_out);
      const std::string report = (fs::path(pr_out) / "report.csv").string();
      const std::string table = (fs::path(pr_out) / "sweep.csv").string();
      const std::string mixer = (fs::path(pr_out) / "mixer.mamc").string();
      prcfg.report_csv = report.c_str();
      prcfg.table_path = pr_task == "frame" ? table.c_str() : nullptr;
      prcfg.mixer_out = pr_input == "repr-weighted" ? mixer.c_str() : nullptr;
      std::vector<double> acc(pr_budgets.size() + 1);
      if (auto st = mam_probe(&prcfg, acc.data(), acc.size())) return fail(st);
      write_snapshot(probe, pr_out);
      const std::size_t rows = pr_task == "frame" ? pr_budgets.size() : 1;
      for (std::size_t i = 0; i < rows; ++i)
        std::printf("probe %s %s budget %g accuracy %.4f\n", pr_input.c_str(), pr_task.c_str(),
                    pr_task == "frame" ? pr_budgets[i] : 1.0, acc[i]);
      return 0;
    }
    if (*finetune) {
      ftcfg.cache_dir = ft_cache.c_str();
      ftcfg.checkpoint = ft_ckpt.c_str();
      ftcfg.task = ft_task.c_str();
      ftcfg.labels = ft_labels.c_str();
      ftcfg.readout = ft_readout.c_str();
      fs::create_directories(ft_out);
      const std::string report = (fs::path(ft_out) / "report.csv").string();
      const std::string log = (fs::path(ft_out) / "loss.csv").string();
      const std::string ckpt = (fs::path(ft_out) / "finetuned.mamc").string();
      ftcfg.report_csv = report.c_str();
      ftcfg.log_csv = log.c_str();
      ftcfg.out_checkpoint = ckpt.c_str();
      mam_finetune_summary sum{};
      if (auto st = mam_finetune(&ftcfg, &sum)) return fail(st);
      write_snapshot(finetune, ft_out);
      std::printf("finetune: %llu steps, accuracy %.4f\n", static_cast<unsigned long long>(sum.steps), sum.accuracy);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

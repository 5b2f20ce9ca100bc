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

#include "mam/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "mam/error.hpp"
#include "mam/ops.hpp"
#include "mam/rng.hpp"

namespace mam::train {

using features::FeatureSequence;
using model::EncoderConfig;
using model::Model;

void Corpus::validate(const EncoderConfig& cfg) const {
  if (inputs.empty()) throw ContractError("corpus is empty");
  if (!targets.empty() && targets.size() != inputs.size())
    throw DimensionError("corpus: " + std::to_string(targets.size()) + " target sequences for " +
                         std::to_string(inputs.size()) + " inputs");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    if (in.dim != cfg.input_dim)
      throw DimensionError("corpus: utterance '" + in.utterance_id + "' has input dim " + std::to_string(in.dim) +
                           ", the encoder expects " + std::to_string(cfg.input_dim));
    if (in.num_frames == 0) throw ContractError("corpus: utterance '" + in.utterance_id + "' has no frames");
    if (in.num_frames > cfg.max_steps)
      throw ContractError("corpus: utterance '" + in.utterance_id + "' exceeds max_steps");
    const auto& tg = targets.empty() ? in : targets[i];
    if (tg.dim != cfg.target_dim)
      throw DimensionError("corpus: utterance '" + in.utterance_id + "' has target dim " + std::to_string(tg.dim) +
                           ", the head predicts " + std::to_string(cfg.target_dim));
    if (tg.num_frames != in.num_frames)
      throw DimensionError("corpus: utterance '" + in.utterance_id + "' target/input step counts differ");
  }
}

std::vector<std::vector<std::size_t>> make_buckets(const std::vector<FeatureSequence>& inputs,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  std::vector<std::size_t> idx(inputs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return inputs[a].num_frames < inputs[b].num_frames; });
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < idx.size(); start += batch_size)
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + batch_size)));
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t buckets, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(buckets);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(derive_seed(seed, "bucket-order"), epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// ---- checkpoints ---------------------------------------------------------

namespace {

std::vector<std::int64_t> encode_config(const EncoderConfig& c, bool has_head) {
  return {static_cast<std::int64_t>(c.hidden_dim), static_cast<std::int64_t>(c.ff_dim),
          static_cast<std::int64_t>(c.heads),      static_cast<std::int64_t>(c.layers),
          c.downsample,                            c.consecutive,
          static_cast<std::int64_t>(c.input_dim),  static_cast<std::int64_t>(c.target_dim),
          static_cast<std::int64_t>(c.target_kind), static_cast<std::int64_t>(c.max_steps),
          has_head ? 1 : 0};
}

}  // namespace

checkpoint::Checkpoint to_checkpoint(const Model<float>& model, const optim::AdamState* adam, std::uint64_t step) {
  checkpoint::Checkpoint ck;
  ck.step = step;
  ck.add(checkpoint::NamedTensor::integers("meta.encoder", encode_config(model.config(), model.has_head())));
  // Bit pattern of the double, so the config compares equal after a reload.
  ck.add(checkpoint::NamedTensor::integers("meta.dropout", {std::bit_cast<std::int64_t>(model.config().dropout)}));
  for (const auto& [name, t] : model.parameters())
    ck.add(checkpoint::NamedTensor::floats(name, t.shape(), {t.data().begin(), t.data().end()}));
  if (adam) {
    ck.add(checkpoint::NamedTensor::integers("adam.step", {static_cast<std::int64_t>(adam->step)}));
    for (const auto& [name, m] : adam->m) ck.add(checkpoint::NamedTensor::floats("adam.m." + name, Shape{m.size()}, m));
    for (const auto& [name, v] : adam->v) ck.add(checkpoint::NamedTensor::floats("adam.v." + name, Shape{v.size()}, v));
  }
  return ck;
}

EncoderConfig config_from_checkpoint(const checkpoint::Checkpoint& ckpt) {
  const auto& meta = ckpt.get("meta.encoder");
  if (!meta.is_integer || meta.i64.size() != 11) throw FormatError("checkpoint: malformed meta.encoder");
  const auto& v = meta.i64;
  EncoderConfig c;
  c.hidden_dim = static_cast<std::size_t>(v[0]);
  c.ff_dim = static_cast<std::size_t>(v[1]);
  c.heads = static_cast<std::size_t>(v[2]);
  c.layers = static_cast<std::size_t>(v[3]);
  c.downsample = static_cast<int>(v[4]);
  c.consecutive = static_cast<int>(v[5]);
  c.input_dim = static_cast<std::size_t>(v[6]);
  c.target_dim = static_cast<std::size_t>(v[7]);
  c.target_kind = static_cast<model::TargetKind>(v[8]);
  c.max_steps = static_cast<std::size_t>(v[9]);
  if (ckpt.contains("meta.dropout")) {
    const auto& d = ckpt.get("meta.dropout");
    if (!d.is_integer || d.i64.size() != 1) throw FormatError("checkpoint: malformed meta.dropout");
    c.dropout = std::bit_cast<double>(d.i64[0]);
  }
  c.validate();
  return c;
}

bool checkpoint_has_head(const checkpoint::Checkpoint& ckpt) { return ckpt.get("meta.encoder").i64.at(10) != 0; }

void load_into(Model<float>& model, const checkpoint::Checkpoint& ckpt, optim::AdamState* adam) {
  for (auto& [name, t] : model.parameters()) {
    if (!ckpt.contains(name)) continue;
    const auto& src = ckpt.get(name);
    if (src.shape != t.shape() || src.is_integer)
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_to_string(src.shape) +
                           ", the model expects " + shape_to_string(t.shape()));
  }
  for (auto& [name, t] : model.parameters()) {
    const auto& src = ckpt.get(name);
    std::copy(src.f32.begin(), src.f32.end(), t.data().begin());
  }
  if (!adam) return;
  adam->m.clear();
  adam->v.clear();
  adam->step = 0;
  if (!ckpt.contains("adam.step")) return;
  adam->step = static_cast<std::uint64_t>(ckpt.get("adam.step").i64.at(0));
  for (const auto& t : ckpt.tensors) {
    const bool is_m = t.name.rfind("adam.m.", 0) == 0, is_v = t.name.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) continue;
    const std::string param = t.name.substr(7);
    const auto it = model.parameters().find(param);
    if (it == model.parameters().end())
      throw FormatError("checkpoint moment '" + t.name + "' refers to an unknown parameter");
    if (t.f32.size() != it->second.numel())
      throw DimensionError("checkpoint tensor '" + t.name + "' does not match parameter '" + param + "'");
    (is_m ? adam->m : adam->v)[param] = t.f32;
  }
}

Model<float> load_model(const std::filesystem::path& path) {
  const auto ck = checkpoint::load_checkpoint(path);
  Model<float> m(config_from_checkpoint(ck), 0, checkpoint_has_head(ck));
  load_into(m, ck, nullptr);
  return m;
}

// ---- pre-training --------------------------------------------------------

std::filesystem::path last_checkpoint_path(const std::filesystem::path& out_dir) { return out_dir / "last.mamc"; }

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ostringstream out;
  out << "step,lr,loss,grad_norm\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(r.step), r.lr, r.loss,
                  r.grad_norm);
    out << buf;
  }
  io::write_text_atomic(path, out.str());
}

namespace {

std::vector<LossRecord> read_loss_log(const std::filesystem::path& path, std::uint64_t up_to) {
  std::vector<LossRecord> log;
  std::ifstream in(path);
  if (!in) return log;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    LossRecord r;
    unsigned long long step = 0;
    if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf", &step, &r.lr, &r.loss, &r.grad_norm) != 4) continue;
    r.step = step;
    if (r.step <= up_to) log.push_back(r);
  }
  return log;
}

std::vector<optim::ParamRef> param_refs(Model<float>& model, double scale_encoder, double scale_head) {
  std::vector<optim::ParamRef> refs;
  for (auto& [name, t] : model.parameters())
    refs.push_back({name, &t, name.rfind("head.", 0) == 0 ? scale_head : scale_encoder});
  return refs;
}

Tensor<float> to_tensor(const std::vector<float>& values, std::size_t b, std::size_t t, std::size_t d) {
  return Tensor<float>(Shape{b, t, d}, values);
}

}  // namespace

TrainState pretrain(const Corpus& corpus, const PretrainOptions& opts) {
  opts.encoder.validate();
  opts.policy.validate();
  opts.schedule.validate();
  corpus.validate(opts.encoder);

  TrainState st{Model<float>(opts.encoder, derive_seed(opts.seed, "init"), true), {}, 0, {}};
  if (opts.resume_from) {
    const auto ck = checkpoint::load_checkpoint(*opts.resume_from);
    const auto cfg = config_from_checkpoint(ck);
    if (!(cfg == opts.encoder)) throw ContractError("resume: checkpoint encoder config differs from the requested one");
    load_into(st.model, ck, &st.adam);
    st.step = ck.step;
    if (!opts.out_dir.empty()) st.log = read_loss_log(opts.out_dir / "loss.csv", st.step);
  }
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  const auto buckets = make_buckets(corpus.inputs, opts.schedule.batch_size);
  const std::size_t nb = buckets.size();
  const std::uint64_t mask_seed = derive_seed(derive_seed(opts.seed, "mask"), opts.policy.seed);
  const std::uint64_t dropout_seed = derive_seed(opts.seed, "dropout");
  const std::uint64_t end = opts.stop_after ? std::min(opts.stop_after, opts.schedule.total_steps)
                                            : opts.schedule.total_steps;
  st.model.set_trainable(true);
  auto refs = param_refs(st.model, 1.0, 1.0);

  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order;
  auto save = [&](std::uint64_t step, bool final) {
    if (opts.out_dir.empty()) return;
    const auto ck = to_checkpoint(st.model, &st.adam, step);
    if (!final) {
      char name[64];
      std::snprintf(name, sizeof name, "step-%08llu.mamc", static_cast<unsigned long long>(step));
      checkpoint::save_checkpoint(ck, opts.out_dir / name);
    }
    checkpoint::save_checkpoint(ck, last_checkpoint_path(opts.out_dir));
    write_loss_log(opts.out_dir / "loss.csv", st.log);
  };

  bool saved = false;
  for (std::uint64_t s = st.step; s < end; ++s) {
    const std::uint64_t epoch = s / nb;
    if (epoch != cached_epoch) {
      order = epoch_order(nb, opts.seed, epoch);
      cached_epoch = epoch;
    }
    const auto& members = buckets[order[s % nb]];
    std::vector<const FeatureSequence*> in, tg;
    for (auto i : members) {
      in.push_back(&corpus.inputs[i]);
      if (!corpus.targets.empty()) tg.push_back(&corpus.targets[i]);
    }
    const auto batch = masking::make_batch(in, tg, opts.policy, derive_seed(mask_seed, epoch));
    const double lr = optim::lr_at(s + 1, opts.schedule);
    std::mt19937_64 drop_rng(derive_seed(dropout_seed, s));

    st.model.zero_grad();
    double loss_value = 0.0;
    {
      Tape<float> tape;
      auto rec = tape.record();
      const auto x = to_tensor(batch.inputs, batch.batch, batch.steps, batch.input_dim);
      const auto y = to_tensor(batch.targets, batch.batch, batch.steps, batch.target_dim);
      const auto enc = st.model.encode(x, batch.pad_mask, true, &drop_rng);
      const auto pred = st.model.predict_frames(enc.last());
      const auto loss = ops::masked_l1_loss(pred, y, batch.select_mask);
      loss_value = loss.item();
      tape.backward(loss);
    }
    if (!std::isfinite(loss_value))
      throw NumericError("pretrain: non-finite loss at step " + std::to_string(s + 1));
    const double norm = optim::clip_grad_norm(refs, opts.clip_norm);
    optim::adam_step(refs, st.adam, lr);
    st.step = s + 1;
    LossRecord rec{st.step, lr, loss_value, norm};
    st.log.push_back(rec);
    if (opts.on_step) opts.on_step(rec);
    saved = opts.checkpoint_every && st.step % opts.checkpoint_every == 0;
    if (saved) save(st.step, false);
  }
  if (!saved) save(st.step, true);
  return st;
}

// ---- fine-tuning ---------------------------------------------------------

std::uint64_t finetune_steps(std::size_t train_items, std::size_t batch_size, std::size_t epochs) {
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  return static_cast<std::uint64_t>(epochs) * ((train_items + batch_size - 1) / batch_size);
}

namespace {

struct Downstream {
  virtual ~Downstream() = default;
  virtual std::vector<optim::ParamRef> params() = 0;
  // Loss over a batch of utterances given the encoder's last layer.
  virtual Tensor<float> loss(const Tensor<float>& hidden, const masking::MaskedBatch& batch,
                             std::span<const std::size_t> items) = 0;
  // Per-item predictions (frame or utterance) for scoring.
  virtual void predict(const Tensor<float>& hidden, const masking::MaskedBatch& batch,
                       std::span<const std::size_t> items, std::vector<int>& pred, std::vector<int>& gold) = 0;
};

struct FrameHead final : Downstream {
  probes::LinearClassifier<float> clf;
  const std::vector<std::vector<int>>& labels;

  FrameHead(std::size_t h, int classes, std::mt19937_64& rng, const std::vector<std::vector<int>>& l)
      : clf(h, static_cast<std::size_t>(classes), rng), labels(l) {}

  std::vector<int> flat_labels(const masking::MaskedBatch& b, std::span<const std::size_t> items) const {
    std::vector<int> y(b.batch * b.steps, -1);
    for (std::size_t k = 0; k < items.size(); ++k) {
      const auto& l = labels[items[k]];
      for (std::size_t t = 0; t < l.size() && t < b.steps; ++t)
        if (!b.pad_mask[k * b.steps + t]) y[k * b.steps + t] = l[t];
    }
    return y;
  }
  std::vector<optim::ParamRef> params() override { return clf.params("downstream."); }
  Tensor<float> logits(const Tensor<float>& hidden) const {
    return clf.forward(ops::reshape(hidden, Shape{hidden.dim(0) * hidden.dim(1), hidden.dim(2)}));
  }
  Tensor<float> loss(const Tensor<float>& hidden, const masking::MaskedBatch& b,
                     std::span<const std::size_t> items) override {
    const auto y = flat_labels(b, items);
    return ops::cross_entropy(logits(hidden), std::span<const int>(y));
  }
  void predict(const Tensor<float>& hidden, const masking::MaskedBatch& b, std::span<const std::size_t> items,
               std::vector<int>& pred, std::vector<int>& gold) override {
    const auto y = flat_labels(b, items);
    const auto z = logits(hidden);
    const std::size_t c = z.dim(1);
    for (std::size_t r = 0; r < y.size(); ++r) {
      if (y[r] < 0) continue;
      const float* row = z.ptr() + r * c;
      pred.push_back(static_cast<int>(std::max_element(row, row + c) - row));
      gold.push_back(y[r]);
    }
  }
};

struct UtteranceHead final : Downstream {
  probes::RnnClassifier<float> clf;
  const std::vector<int>& labels;

  UtteranceHead(std::size_t h, const probes::ProbeConfig& cfg, int classes, std::mt19937_64& rng,
                const std::vector<int>& l)
      : clf(h, cfg.rnn_hidden, static_cast<std::size_t>(classes), cfg.readout, rng), labels(l) {}

  static std::vector<std::size_t> lengths(const masking::MaskedBatch& b) {
    std::vector<std::size_t> out(b.batch, 0);
    for (std::size_t k = 0; k < b.batch; ++k)
      for (std::size_t t = 0; t < b.steps; ++t) out[k] += !b.pad_mask[k * b.steps + t];
    return out;
  }
  std::vector<optim::ParamRef> params() override { return clf.params("downstream."); }
  Tensor<float> loss(const Tensor<float>& hidden, const masking::MaskedBatch& b,
                     std::span<const std::size_t> items) override {
    std::vector<int> y;
    for (auto i : items) y.push_back(labels[i]);
    return ops::cross_entropy(clf.forward(hidden, lengths(b)), std::span<const int>(y));
  }
  void predict(const Tensor<float>& hidden, const masking::MaskedBatch& b, std::span<const std::size_t> items,
               std::vector<int>& pred, std::vector<int>& gold) override {
    const auto z = clf.forward(hidden, lengths(b));
    const std::size_t c = z.dim(1);
    for (std::size_t k = 0; k < items.size(); ++k) {
      const float* row = z.ptr() + k * c;
      pred.push_back(static_cast<int>(std::max_element(row, row + c) - row));
      gold.push_back(labels[items[k]]);
    }
  }
};

masking::MaskedBatch plain_batch(const std::vector<FeatureSequence>& inputs, std::span<const std::size_t> items) {
  std::vector<const FeatureSequence*> ptrs;
  for (auto i : items) ptrs.push_back(&inputs[i]);
  return masking::make_plain_batch(ptrs);
}

FinetuneResult run_finetune(Model<float>& model, const std::vector<FeatureSequence>& inputs,
                            std::vector<std::size_t> train_items, const std::vector<std::size_t>& eval_items,
                            Downstream& head, const FinetuneOptions& opts) {
  if (train_items.empty()) throw ContractError("finetune: no training utterances");
  for (const auto& seq : inputs)
    if (seq.dim != model.config().input_dim)
      throw DimensionError("finetune: utterance '" + seq.utterance_id + "' has dim " + std::to_string(seq.dim) +
                           ", the encoder expects " + std::to_string(model.config().input_dim));
  optim::TrainSchedule sched = opts.schedule;
  const std::size_t bs = sched.batch_size;
  sched.total_steps = std::max<std::uint64_t>(1, finetune_steps(train_items.size(), bs, opts.epochs));
  sched.validate();

  model.set_trainable(opts.encoder_lr_scale != 0.0);
  std::vector<optim::ParamRef> refs;
  for (auto& [name, t] : model.parameters())
    if (name.rfind("head.", 0) != 0) refs.push_back({name, &t, opts.encoder_lr_scale});
  for (auto& p : head.params()) refs.push_back(p);

  FinetuneResult res;
  optim::AdamState adam;
  std::uint64_t step = 0;
  const std::uint64_t dropout_seed = derive_seed(opts.seed, "finetune-dropout");
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::mt19937_64 shuf(derive_seed(derive_seed(opts.seed, "finetune-order"), epoch));
    std::shuffle(train_items.begin(), train_items.end(), shuf);
    for (std::size_t start = 0; start < train_items.size(); start += bs) {
      const std::span<const std::size_t> items(train_items.data() + start, std::min(bs, train_items.size() - start));
      const auto batch = plain_batch(inputs, items);
      const double lr = optim::lr_at(step + 1, sched);
      std::mt19937_64 drop_rng(derive_seed(dropout_seed, step));
      for (auto& r : refs) r.tensor->zero_grad();
      double loss_value = 0.0;
      {
        Tape<float> tape;
        auto rec = tape.record();
        const auto x = to_tensor(batch.inputs, batch.batch, batch.steps, batch.input_dim);
        const auto enc = model.encode(x, batch.pad_mask, true, &drop_rng);
        const auto loss = head.loss(enc.last(), batch, items);
        loss_value = loss.item();
        tape.backward(loss);
      }
      const double norm = optim::clip_grad_norm(refs, opts.clip_norm);
      optim::adam_step(refs, adam, lr);
      ++step;
      LossRecord rec{step, lr, loss_value, norm};
      res.log.push_back(rec);
      if (opts.on_step) opts.on_step(rec);
    }
  }
  model.set_trainable(false);

  std::vector<int> pred, gold;
  for (std::size_t start = 0; start < eval_items.size(); start += bs) {
    const std::span<const std::size_t> items(eval_items.data() + start, std::min(bs, eval_items.size() - start));
    const auto batch = plain_batch(inputs, items);
    const auto x = to_tensor(batch.inputs, batch.batch, batch.steps, batch.input_dim);
    head.predict(model.encode(x, batch.pad_mask, false).last(), batch, items, pred, gold);
  }
  res.report.accuracy = probes::evaluate_accuracy(pred, gold);
  res.report.input_kind = "finetune";
  res.report.seed = opts.seed;
  res.report.epochs = opts.epochs;
  return res;
}

}  // namespace

FinetuneResult finetune_frames(Model<float>& model, const std::vector<FeatureSequence>& inputs,
                               const std::vector<std::vector<int>>& frame_labels, const probes::Split& split,
                               double budget, int num_classes, const FinetuneOptions& opts) {
  if (frame_labels.size() != inputs.size())
    throw DimensionError("finetune: " + std::to_string(frame_labels.size()) + " label sequences for " +
                         std::to_string(inputs.size()) + " utterances");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (frame_labels[i].size() != inputs[i].num_frames)
      throw DimensionError("finetune: utterance '" + inputs[i].utterance_id + "' label/step count mismatch");
  const auto chosen = probes::budget_subset(split.train, budget, opts.probe.seed);
  std::mt19937_64 init(derive_seed(opts.seed, "finetune-head"));
  FrameHead head(model.config().hidden_dim, num_classes, init, frame_labels);
  const auto& eval = split.test.empty() ? (split.valid.empty() ? split.train : split.valid) : split.test;
  auto res = run_finetune(model, inputs, chosen, eval, head, opts);
  res.report.task = "frame";
  res.report.budget = budget;
  res.report.split = split.test.empty() ? (split.valid.empty() ? "train" : "valid") : "test";
  res.report.labeled_utterances = chosen.size();
  for (auto i : chosen)
    res.report.labeled_frames += static_cast<std::size_t>(
        std::count_if(frame_labels[i].begin(), frame_labels[i].end(), [](int y) { return y >= 0; }));
  return res;
}

FinetuneResult finetune_utterances(Model<float>& model, const std::vector<FeatureSequence>& inputs,
                                   const std::vector<int>& labels, int num_classes, const FinetuneOptions& opts) {
  if (labels.size() != inputs.size()) throw DimensionError("finetune: label count does not match utterances");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2)
    throw ContractError("finetune: at least two classes must be present");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw ContractError("finetune: label outside [0, num_classes)");
  const auto split =
      probes::split_stratified(labels, opts.probe.test_fraction, 0.0, opts.probe.seed);
  std::mt19937_64 init(derive_seed(opts.seed, "finetune-head"));
  UtteranceHead head(model.config().hidden_dim, opts.probe, num_classes, init, labels);
  const auto& eval = split.test.empty() ? split.train : split.test;
  auto res = run_finetune(model, inputs, split.train, eval, head, opts);
  res.report.task = "utterance";
  res.report.split = split.test.empty() ? "train" : "test";
  res.report.labeled_utterances = split.train.size();
  return res;
}

}  // namespace mam::train

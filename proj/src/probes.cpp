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

#include "mam/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include "mam/error.hpp"
#include "mam/ops.hpp"
#include "mam/rng.hpp"

namespace mam::probes {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  return i < s.size() && s.find_first_not_of("0123456789", i) == std::string::npos;
}

int parse_class(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  if (!is_integer(s)) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad class id '" + s + "'");
  const int v = std::stoi(s);
  if (v < 0) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": negative class id");
  return v;
}

void check_class_count(int& num_classes, int max_id, const std::filesystem::path& path) {
  if (num_classes == 0) {
    num_classes = max_id + 1;
  } else if (max_id >= num_classes) {
    throw FormatError(path.string() + ": class id " + std::to_string(max_id) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  }
}

template <typename T>
Tensor<T> init_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  // Uniform(±1/sqrt(rows)), the usual fan-in initialisation for small heads.
  Tensor<T> t(Shape{rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

std::vector<int> argmax_rows(const Tensor<float>& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = logits.ptr() + r * c;
    out[r] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

// Gathered frames from a set of utterances, one matrix per layer.
struct FrameSet {
  std::vector<std::vector<float>> layers;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::size_t utterances = 0;

  std::size_t size() const { return labels.size(); }
};

FrameSet gather_frames(const ProbeDataset& data, std::span<const std::size_t> which) {
  FrameSet fs;
  if (which.empty()) return fs;
  const std::size_t n_layers = data[which.front()].layers.size();
  fs.dim = data[which.front()].dim();
  fs.layers.resize(n_layers);
  for (std::size_t idx : which) {
    const auto& u = data[idx];
    if (u.layers.size() != n_layers || u.dim() != fs.dim)
      throw DimensionError("probe: utterance '" + u.id + "' does not match the dataset's layer layout");
    if (u.frame_labels.size() != u.steps())
      throw DimensionError("probe: utterance '" + u.id + "' has " + std::to_string(u.frame_labels.size()) +
                           " frame labels for " + std::to_string(u.steps()) + " steps");
    ++fs.utterances;
    for (std::size_t t = 0; t < u.steps(); ++t) {
      if (u.frame_labels[t] < 0) continue;
      fs.labels.push_back(u.frame_labels[t]);
      for (std::size_t l = 0; l < n_layers; ++l) {
        const float* row = u.layers[l].ptr() + t * fs.dim;
        fs.layers[l].insert(fs.layers[l].end(), row, row + fs.dim);
      }
    }
  }
  return fs;
}

std::vector<Tensor<float>> frame_batch(const FrameSet& fs, std::span<const std::size_t> rows) {
  std::vector<Tensor<float>> out;
  for (const auto& layer : fs.layers) {
    Tensor<float> t(Shape{rows.size(), fs.dim});
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(layer.data() + rows[i] * fs.dim, fs.dim, t.ptr() + i * fs.dim);
    out.push_back(std::move(t));
  }
  return out;
}

Tensor<float> combine(const std::vector<Tensor<float>>& layers, const repr::WeightedSumMixer<float>* mixer) {
  return mixer ? repr::mix(layers, *mixer) : layers.front();
}

struct Snapshot {
  std::vector<std::vector<float>> values;

  static Snapshot take(std::span<const optim::ParamRef> params) {
    Snapshot s;
    for (const auto& p : params) s.values.emplace_back(p.tensor->data().begin(), p.tensor->data().end());
    return s;
  }
  void restore(std::span<const optim::ParamRef> params) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      std::copy(values[i].begin(), values[i].end(), params[i].tensor->data().begin());
  }
};

std::vector<optim::ParamRef> mixer_params(repr::WeightedSumMixer<float>& mixer) {
  std::vector<optim::ParamRef> p{{"mixer.logits", &mixer.logits, 1.0}};
  if (mixer.train_gamma) p.push_back({"mixer.gamma", &mixer.gamma, 1.0});
  return p;
}

double frame_accuracy(const FrameSet& fs, const LinearClassifier<float>& clf,
                      const repr::WeightedSumMixer<float>* mixer) {
  if (fs.size() == 0) return 0.0;
  std::vector<int> pred;
  pred.reserve(fs.size());
  constexpr std::size_t chunk = 4096;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < fs.size(); start += chunk) {
    rows.resize(std::min(chunk, fs.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto p = argmax_rows(clf.forward(combine(frame_batch(fs, rows), mixer)));
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return evaluate_accuracy(pred, fs.labels);
}

}  // namespace

FrameLabelSet read_frame_labels(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  FrameLabelSet set;
  std::string line;
  std::size_t line_no = 0;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    if (line_no == 1 && !is_integer(f[1])) continue;  // header
    if (!is_integer(f[1]) || f[1][0] == '-')
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad frame index '" + f[1] + "'");
    const auto frame = static_cast<std::size_t>(std::stoull(f[1]));
    const int cls = parse_class(f[2], path, line_no);
    auto& seq = set.labels[f[0]];
    if (seq.size() <= frame) seq.resize(frame + 1, -1);
    seq[frame] = cls;
    max_id = std::max(max_id, cls);
  }
  check_class_count(num_classes, max_id, path);
  set.num_classes = num_classes;
  return set;
}

void write_frame_labels(const std::filesystem::path& path, const FrameLabelSet& set) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "utterance_id,frame_index,class_id\n";
  for (const auto& [id, seq] : set.labels)
    for (std::size_t t = 0; t < seq.size(); ++t)
      if (seq[t] >= 0) out << id << ',' << t << ',' << seq[t] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

UtteranceLabelSet read_utterance_labels(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  UtteranceLabelSet set;
  std::string line;
  std::size_t line_no = 0;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
    if (line_no == 1 && !is_integer(f[1])) continue;
    const int cls = parse_class(f[1], path, line_no);
    set.labels[f[0]] = cls;
    max_id = std::max(max_id, cls);
  }
  check_class_count(num_classes, max_id, path);
  set.num_classes = num_classes;
  return set;
}

void write_utterance_labels(const std::filesystem::path& path, const UtteranceLabelSet& set) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "utterance_id,class_id\n";
  for (const auto& [id, cls] : set.labels) out << id << ',' << cls << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<int> align_frame_labels(std::span<const int> raw, int stack_factor, std::size_t steps) {
  if (stack_factor < 1) throw ContractError("align_frame_labels: stack factor must be >= 1");
  const auto r = static_cast<std::size_t>(stack_factor);
  std::vector<int> out(steps, -1);
  std::map<int, std::size_t> votes;
  for (std::size_t s = 0; s < steps; ++s) {
    votes.clear();
    for (std::size_t j = s * r; j < (s + 1) * r && j < raw.size(); ++j)
      if (raw[j] >= 0) ++votes[raw[j]];
    std::size_t best = 0;
    for (const auto& [cls, n] : votes) {
      if (n > best) {
        best = n;
        out[s] = cls;
      }
    }
  }
  return out;
}

Split split_utterances(std::size_t n, double test_fraction, double valid_fraction, std::uint64_t seed) {
  if (test_fraction < 0 || valid_fraction < 0 || test_fraction + valid_fraction >= 1.0)
    throw ContractError("split: fractions must be non-negative and leave room for training");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto part = [&](double f) {
    if (f <= 0.0 || n < 3) return std::size_t{0};
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
  };
  const std::size_t n_test = part(test_fraction), n_valid = part(valid_fraction);
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.valid.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), idx.end());
  for (auto* v : {&s.train, &s.valid, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

Split split_stratified(std::span<const int> labels, double test_fraction, double valid_fraction, std::uint64_t seed) {
  Split s = split_utterances(labels.size(), test_fraction, valid_fraction, seed);
  std::set<int> present(labels.begin(), labels.end()), in_train;
  for (auto i : s.train) in_train.insert(labels[i]);
  if (in_train == present) return s;
  // Per-class split: every class keeps at least one training utterance.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(derive_seed(seed, "stratified"));
  Split out;
  for (auto& [cls, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n = members.size();
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    std::size_t n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n)));
    n_test = std::min(n_test, n - 1);
    n_valid = std::min(n_valid, n - 1 - n_test);
    out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.valid.insert(out.valid.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test),
                     members.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), members.end());
  }
  for (auto* v : {&out.train, &out.valid, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

std::size_t budget_count(std::size_t n, double budget) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(budget * static_cast<double>(n))));
}

std::vector<std::size_t> budget_subset(std::span<const std::size_t> pool, double budget, std::uint64_t seed) {
  if (!(budget > 0.0 && budget <= 1.0)) throw ContractError("budget must lie in (0, 1], got " + std::to_string(budget));
  if (pool.empty()) throw ContractError("budget selection: empty training pool");
  std::vector<std::size_t> order(pool.begin(), pool.end());
  std::mt19937_64 rng(derive_seed(seed, "budget"));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), budget_count(pool.size(), budget)));
  std::sort(order.begin(), order.end());
  return order;
}

double evaluate_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw DimensionError("evaluate_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw ContractError("evaluate_accuracy: nothing to score");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

template <typename T>
LinearClassifier<T>::LinearClassifier(std::size_t input_dim, std::size_t classes, std::mt19937_64& rng)
    : weight(init_matrix<T>(input_dim, classes, rng)), bias(Shape{classes}) {}

template <typename T>
Tensor<T> LinearClassifier<T>::forward(const Tensor<T>& x) const {
  return ops::linear(x, weight, bias);
}

template <typename T>
std::vector<optim::ParamRef> LinearClassifier<T>::params(const std::string& prefix)
  requires std::same_as<T, float>
{
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
  return {{prefix + "weight", &weight, 1.0}, {prefix + "bias", &bias, 1.0}};
}

template <typename T>
RnnClassifier<T>::RnnClassifier(std::size_t input_dim, std::size_t hidden, std::size_t classes, Readout r,
                                std::mt19937_64& rng)
    : w_in(init_matrix<T>(input_dim, hidden, rng)),
      w_rec(init_matrix<T>(hidden, hidden, rng)),
      b_rec(Shape{hidden}),
      w_out(init_matrix<T>(hidden, classes, rng)),
      b_out(Shape{classes}),
      readout(r) {}

template <typename T>
Tensor<T> RnnClassifier<T>::forward(const Tensor<T>& x, std::span<const std::size_t> lengths) const {
  if (x.rank() != 3 || x.dim(0) != lengths.size()) throw DimensionError("rnn probe: expects [B, T, D] and B lengths");
  const std::size_t b = x.dim(0), steps = x.dim(1), h = w_rec.dim(0);
  const Tensor<T> xw = ops::linear(x, w_in, b_rec);
  const Tensor<T> zeros(Shape{b, h});
  Tensor<T> state = zeros;
  Tensor<T> pooled = zeros;
  for (std::size_t t = 0; t < steps; ++t) {
    ops::RowMask active(b);
    for (std::size_t i = 0; i < b; ++i) active[i] = t < lengths[i];
    const Tensor<T> next = ops::tanh(ops::add(ops::time_step(xw, t), ops::matmul(state, w_rec)));
    state = ops::select_rows(next, state, active);
    if (readout == Readout::mean) pooled = ops::add(pooled, ops::select_rows(next, zeros, active));
  }
  if (readout == Readout::mean) {
    Tensor<T> inv(Shape{b, h});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < h; ++j) inv[i * h + j] = T(1) / static_cast<T>(std::max<std::size_t>(1, lengths[i]));
    state = ops::mul(pooled, inv);
  }
  return ops::linear(state, w_out, b_out);
}

template <typename T>
std::vector<optim::ParamRef> RnnClassifier<T>::params(const std::string& prefix)
  requires std::same_as<T, float>
{
  std::vector<optim::ParamRef> p{{prefix + "w_in", &w_in, 1.0},
                                 {prefix + "w_rec", &w_rec, 1.0},
                                 {prefix + "b_rec", &b_rec, 1.0},
                                 {prefix + "w_out", &w_out, 1.0},
                                 {prefix + "b_out", &b_out, 1.0}};
  for (auto& r : p) r.tensor->set_requires_grad(true);
  return p;
}

template struct LinearClassifier<float>;
template struct LinearClassifier<double>;
template struct RnnClassifier<float>;
template struct RnnClassifier<double>;

ProbeReport train_linear_frame_probe(const ProbeDataset& data, const Split& split, double budget, int num_classes,
                                     const ProbeConfig& cfg, const std::string& input_kind) {
  if (num_classes < 1) throw ContractError("frame probe: num_classes must be positive");
  const auto chosen = budget_subset(split.train, budget, cfg.seed);
  const FrameSet train = gather_frames(data, chosen);
  if (train.size() == 0) throw ContractError("frame probe: the selected budget contains no labelled frames");
  const FrameSet valid = gather_frames(data, split.valid);
  const FrameSet test = gather_frames(data, split.test);
  for (int y : train.labels)
    if (y >= num_classes) throw ContractError("frame probe: label " + std::to_string(y) + " >= num_classes");

  std::mt19937_64 init_rng(derive_seed(cfg.seed, "frame-probe-init"));
  LinearClassifier<float> clf(train.dim, static_cast<std::size_t>(num_classes), init_rng);
  std::vector<optim::ParamRef> params = clf.params("probe.");
  const std::size_t n_layers = train.layers.size();
  std::unique_ptr<repr::WeightedSumMixer<float>> mixer;
  if (n_layers > 1) {
    mixer = std::make_unique<repr::WeightedSumMixer<float>>(n_layers);
    mixer->set_trainable(true);
    for (auto& p : mixer_params(*mixer)) params.push_back(p);
  }

  optim::AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -1.0;
  std::size_t since_best = 0, epochs = 0;
  Snapshot best_state = Snapshot::take(params);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, "frame-probe-epoch"), epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_frames) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch_frames, order.size() - start));
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = train.labels[rows[i]];
      for (auto& p : params) p.tensor->zero_grad();
      Tape<float> tape;
      {
        auto rec = tape.record();
        const auto loss = ops::cross_entropy(clf.forward(combine(frame_batch(train, rows), mixer.get())),
                                             std::span<const int>(y));
        tape.backward(loss);
      }
      optim::adam_step(params, adam, cfg.lr);
    }
    ++epochs;
    if (valid.size() == 0) {
      best_state = Snapshot::take(params);
      continue;
    }
    const double acc = frame_accuracy(valid, clf, mixer.get());
    if (acc > best) {
      best = acc;
      since_best = 0;
      best_state = Snapshot::take(params);
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  best_state.restore(params);

  ProbeReport rep;
  rep.input_kind = input_kind;
  rep.task = "frame";
  rep.budget = budget;
  rep.seed = cfg.seed;
  rep.labeled_utterances = chosen.size();
  rep.labeled_frames = train.size();
  rep.epochs = epochs;
  const FrameSet& scored = test.size() ? test : valid.size() ? valid : train;
  rep.split = test.size() ? "test" : valid.size() ? "valid" : "train";
  rep.accuracy = frame_accuracy(scored, clf, mixer.get());
  if (mixer) {
    for (float w : mixer->weights()) rep.mixer_weights.push_back(w);
    rep.mixer_gamma = mixer->gamma[0];
  }
  return rep;
}

namespace {

struct UtteranceBatch {
  std::vector<Tensor<float>> layers;  // each [B, Tmax, D]
  std::vector<std::size_t> lengths;
  std::vector<int> labels;
};

UtteranceBatch utterance_batch(const ProbeDataset& data, std::span<const std::size_t> which) {
  UtteranceBatch b;
  std::size_t steps = 0;
  for (auto i : which) steps = std::max(steps, data[i].steps());
  const std::size_t n_layers = data[which.front()].layers.size(), d = data[which.front()].dim();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Tensor<float> t(Shape{which.size(), steps, d});
    for (std::size_t k = 0; k < which.size(); ++k) {
      const auto& u = data[which[k]];
      if (u.layers.size() != n_layers || u.dim() != d)
        throw DimensionError("rnn probe: utterance '" + u.id + "' does not match the dataset's layer layout");
      std::copy(u.layers[l].data().begin(), u.layers[l].data().end(), t.ptr() + k * steps * d);
    }
    b.layers.push_back(std::move(t));
  }
  for (auto i : which) {
    b.lengths.push_back(data[i].steps());
    b.labels.push_back(data[i].label);
  }
  return b;
}

double utterance_accuracy(const ProbeDataset& data, std::span<const std::size_t> which,
                          const RnnClassifier<float>& clf, const repr::WeightedSumMixer<float>* mixer,
                          std::size_t batch) {
  std::vector<int> pred, gold;
  for (std::size_t start = 0; start < which.size(); start += batch) {
    const auto part = which.subspan(start, std::min(batch, which.size() - start));
    const auto b = utterance_batch(data, part);
    const auto p = argmax_rows(clf.forward(combine(b.layers, mixer), b.lengths));
    pred.insert(pred.end(), p.begin(), p.end());
    gold.insert(gold.end(), b.labels.begin(), b.labels.end());
  }
  return evaluate_accuracy(pred, gold);
}

}  // namespace

ProbeReport train_rnn_utterance_probe(const ProbeDataset& data, int num_classes, const ProbeConfig& cfg,
                                      const std::string& input_kind) {
  std::vector<int> labels;
  for (const auto& u : data) {
    if (u.label < 0 || u.label >= num_classes)
      throw ContractError("rnn probe: utterance '" + u.id + "' has label outside [0, num_classes)");
    labels.push_back(u.label);
  }
  if (std::set<int>(labels.begin(), labels.end()).size() < 2)
    throw ContractError("rnn probe: at least two classes must be present");
  const Split split = split_stratified(labels, cfg.test_fraction, cfg.valid_fraction, cfg.seed);

  std::mt19937_64 init_rng(derive_seed(cfg.seed, "rnn-probe-init"));
  RnnClassifier<float> clf(data.front().dim(), cfg.rnn_hidden, static_cast<std::size_t>(num_classes), cfg.readout,
                           init_rng);
  std::vector<optim::ParamRef> params = clf.params("probe.");
  std::unique_ptr<repr::WeightedSumMixer<float>> mixer;
  if (data.front().layers.size() > 1) {
    mixer = std::make_unique<repr::WeightedSumMixer<float>>(data.front().layers.size());
    mixer->set_trainable(true);
    for (auto& p : mixer_params(*mixer)) params.push_back(p);
  }

  optim::AdamState adam;
  std::vector<std::size_t> order = split.train;
  double best = -1.0;
  std::size_t since_best = 0, epochs = 0;
  Snapshot best_state = Snapshot::take(params);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, "rnn-probe-epoch"), epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_utterances) {
      const std::span<const std::size_t> part(order.data() + start,
                                              std::min(cfg.batch_utterances, order.size() - start));
      const auto b = utterance_batch(data, part);
      for (auto& p : params) p.tensor->zero_grad();
      Tape<float> tape;
      {
        auto rec = tape.record();
        const auto loss =
            ops::cross_entropy(clf.forward(combine(b.layers, mixer.get()), b.lengths), std::span<const int>(b.labels));
        tape.backward(loss);
      }
      optim::adam_step(params, adam, cfg.lr);
    }
    ++epochs;
    if (split.valid.empty()) {
      best_state = Snapshot::take(params);
      continue;
    }
    const double acc = utterance_accuracy(data, split.valid, clf, mixer.get(), cfg.batch_utterances);
    if (acc > best) {
      best = acc;
      since_best = 0;
      best_state = Snapshot::take(params);
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  best_state.restore(params);

  ProbeReport rep;
  rep.input_kind = input_kind;
  rep.task = "utterance";
  rep.seed = cfg.seed;
  rep.labeled_utterances = split.train.size();
  rep.epochs = epochs;
  const auto& scored = split.test.empty() ? split.train : split.test;
  rep.split = split.test.empty() ? "train" : "test";
  rep.accuracy = utterance_accuracy(data, scored, clf, mixer.get(), cfg.batch_utterances);
  if (mixer) {
    for (float w : mixer->weights()) rep.mixer_weights.push_back(w);
    rep.mixer_gamma = mixer->gamma[0];
  }
  return rep;
}

std::vector<ProbeReport> low_resource_sweep(const ProbeDataset& data, const Split& split,
                                            std::span<const double> budgets, int num_classes,
                                            const ProbeConfig& cfg, const std::string& input_kind) {
  if (budgets.empty()) throw ContractError("sweep: no budgets given");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!(budgets[i] > 0.0 && budgets[i] <= 1.0)) throw ContractError("sweep: budgets must lie in (0, 1]");
    if (i > 0 && budgets[i] < budgets[i - 1]) throw ContractError("sweep: budgets must be sorted ascending");
  }
  std::vector<ProbeReport> out;
  for (double b : budgets) out.push_back(train_linear_frame_probe(data, split, b, num_classes, cfg, input_kind));
  return out;
}

void append_reports_csv(const std::filesystem::path& path, std::span<const ProbeReport> reports) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (fresh) out << "input_kind,task,budget,accuracy,seed\n";
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6f", r.budget, r.accuracy);
    out << r.input_kind << ',' << r.task << ',' << buf << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_sweep_table(const std::filesystem::path& path, std::span<const ProbeReport> reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "budget,labeled_utterances,labeled_frames,accuracy\n";
  char buf[96];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.6g,%zu,%zu,%.6f\n", r.budget, r.labeled_utterances, r.labeled_frames,
                  r.accuracy);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mam::probes

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

#include "mam/repr.hpp"

#include <cmath>

#include "mam/error.hpp"
#include "mam/ops.hpp"

namespace mam::repr {

template <typename T>
WeightedSumMixer<T>::WeightedSumMixer(std::size_t layers, bool train_gamma_)
    : logits(Shape{layers}, T(0)), gamma(Tensor<T>::scalar(T(1))), train_gamma(train_gamma_) {
  if (layers == 0) throw ContractError("mixer: at least one layer required");
}

template <typename T>
WeightedSumMixer<T>::WeightedSumMixer(std::vector<T> l, T g, bool train_gamma_)
    : logits(Shape{l.size()}, l), gamma(Tensor<T>::scalar(g)), train_gamma(train_gamma_) {
  if (logits.numel() == 0) throw ContractError("mixer: at least one layer required");
}

template <typename T>
std::vector<T> WeightedSumMixer<T>::weights() const {
  const Tensor<T> w = ops::softmax(logits.clone());
  return {w.data().begin(), w.data().end()};
}

template <typename T>
void WeightedSumMixer<T>::set_trainable(bool on) {
  logits.set_requires_grad(on);
  gamma.set_requires_grad(on && train_gamma);
}

template <typename T>
Tensor<T> extract_last(const RepresentationStack<T>& stack) {
  if (stack.empty()) throw ContractError("extract_last: empty representation stack");
  return stack.back();
}

template <typename T>
Tensor<T> mix(const RepresentationStack<T>& stack, const WeightedSumMixer<T>& mixer) {
  if (stack.size() != mixer.layers()) {
    throw DimensionError("mix: " + std::to_string(mixer.layers()) + " mixer logits for a stack of " +
                         std::to_string(stack.size()) + " layers");
  }
  return ops::scale_by(ops::weighted_sum(stack, ops::softmax(mixer.logits)), mixer.gamma);
}

Mode mode_from_string(const std::string& name) {
  if (name == "last") return Mode::last;
  if (name == "weighted") return Mode::weighted;
  throw ContractError("unknown representation mode '" + name + "' (expected last or weighted)");
}

RepresentationStack<float> encode_utterance(const model::Model<float>& model, const features::FeatureSequence& seq) {
  const auto& cfg = model.config();
  if (seq.dim != cfg.input_dim) {
    throw DimensionError("encode_utterance: '" + seq.utterance_id + "' has dimension " + std::to_string(seq.dim) +
                         " but the model expects " + std::to_string(cfg.input_dim));
  }
  Tensor<float> in(Shape{1, seq.num_frames, seq.dim}, seq.frames);
  const ops::RowMask pad(seq.num_frames, 0);
  auto res = model.encode(in, pad, false);
  RepresentationStack<float> stack;
  for (auto& h : res.hidden) stack.push_back(ops::reshape(h, Shape{seq.num_frames, cfg.hidden_dim}));
  return stack;
}

void dump_representations(const std::vector<features::FeatureSequence>& corpus, const model::Model<float>& model,
                          Mode mode, const WeightedSumMixer<float>& mixer, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& seq : corpus) {
    const auto stack = encode_utterance(model, seq);
    const Tensor<float> rep = mode == Mode::last ? extract_last(stack) : mix(stack, mixer);
    features::FeatureSequence out;
    out.num_frames = seq.num_frames;
    out.dim = model.config().hidden_dim;
    out.frames.assign(rep.data().begin(), rep.data().end());
    out.kind = features::FeatureKind::repr;
    out.sample_rate_hz = seq.sample_rate_hz;
    out.hop_ms = seq.hop_ms;
    out.stack_factor = seq.stack_factor;
    out.utterance_id = seq.utterance_id;
    features::write_feature_file(out_dir / (seq.utterance_id + ".mamf"), out);
  }
}

template struct WeightedSumMixer<float>;
template struct WeightedSumMixer<double>;
template Tensor<float> extract_last(const RepresentationStack<float>&);
template Tensor<double> extract_last(const RepresentationStack<double>&);
template Tensor<float> mix(const RepresentationStack<float>&, const WeightedSumMixer<float>&);
template Tensor<double> mix(const RepresentationStack<double>&, const WeightedSumMixer<double>&);

}  // namespace mam::repr

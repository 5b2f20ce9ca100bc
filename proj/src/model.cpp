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

#include "mam/model.hpp"

#include <algorithm>
#include <cmath>

#include "mam/error.hpp"
#include "mam/rng.hpp"

namespace mam::model {

const char* to_string(TargetKind kind) { return kind == TargetKind::mel ? "mel" : "linear"; }

EncoderConfig EncoderConfig::base(std::size_t mel_dim) {
  EncoderConfig c;
  c.layers = 3;
  c.downsample = 1;
  c.consecutive = 7;
  c.input_dim = mel_dim;
  c.target_dim = mel_dim;
  c.target_kind = TargetKind::mel;
  return c;
}

EncoderConfig EncoderConfig::large(std::size_t mel_dim, std::size_t linear_dim) {
  EncoderConfig c;
  c.layers = 12;
  c.downsample = 3;
  c.consecutive = 3;
  c.input_dim = mel_dim * 3;
  c.target_dim = linear_dim * 3;
  c.target_kind = TargetKind::linear;
  return c;
}

EncoderConfig EncoderConfig::tiny(std::size_t mel_dim) {
  EncoderConfig c = base(mel_dim);
  c.hidden_dim = 64;
  c.ff_dim = 256;
  c.heads = 4;
  c.layers = 2;
  return c;
}

EncoderConfig EncoderConfig::preset(const std::string& name, std::size_t mel_dim, std::size_t linear_dim) {
  if (name == "base") return base(mel_dim);
  if (name == "large") return large(mel_dim, linear_dim);
  if (name == "tiny") return tiny(mel_dim);
  throw ContractError("unknown preset '" + name + "' (expected base, large or tiny)");
}

void EncoderConfig::validate() const {
  if (hidden_dim == 0 || ff_dim == 0 || heads == 0 || input_dim == 0 || target_dim == 0)
    throw ContractError("encoder config: dimensions must be positive");
  if (hidden_dim % heads != 0) throw ContractError("encoder config: hidden_dim must be divisible by heads");
  if (hidden_dim % 2 != 0) throw ContractError("encoder config: hidden_dim must be even for the positional encoding");
  if (downsample < 1 || consecutive < 1) throw ContractError("encoder config: downsample and consecutive must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ContractError("encoder config: dropout must lie in [0, 1)");
  if (max_steps == 0) throw ContractError("encoder config: max_steps must be positive");
}

std::uint64_t count_parameters(const EncoderConfig& cfg) {
  const std::uint64_t h = cfg.hidden_dim, f = cfg.ff_dim;
  const std::uint64_t attention = 4 * (h * h + h) + 2 * h;
  const std::uint64_t feed_forward = (h * f + f) + (f * h + h) + 2 * h;
  const std::uint64_t input_proj = cfg.input_dim * h + h;
  return cfg.layers * (attention + feed_forward) + input_proj;
}

template <typename T>
Tensor<T> sinusoidal_pe(std::size_t t_len, std::size_t dim) {
  if (dim % 2 != 0) throw ContractError("sinusoidal_pe: dimension must be even, got " + std::to_string(dim));
  Tensor<T> pe(Shape{t_len, dim});
  for (std::size_t pos = 0; pos < t_len; ++pos) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pe[pos * dim + 2 * i] = static_cast<T>(std::sin(angle));
      pe[pos * dim + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Model<T>::Model(const EncoderConfig& cfg, std::uint64_t seed, bool with_head) : cfg_(cfg), with_head_(with_head) {
  cfg_.validate();
  std::mt19937_64 rng(derive_seed(seed, "model-init"));
  const std::size_t h = cfg_.hidden_dim;
  add_linear("input_proj.", cfg_.input_dim, h, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    add_linear(p + "attn.q_", h, h, rng);
    add_linear(p + "attn.k_", h, h, rng);
    add_linear(p + "attn.v_", h, h, rng);
    add_linear(p + "attn.out_", h, h, rng);
    add_norm(p + "attn.ln_", h);
    add_linear(p + "ffn.in_", h, cfg_.ff_dim, rng);
    add_linear(p + "ffn.out_", cfg_.ff_dim, h, rng);
    add_norm(p + "ffn.ln_", h);
  }
  if (with_head_) {
    add_linear("head.dense_", h, h, rng);
    add_norm("head.ln_", h);
    add_linear("head.out_", h, cfg_.target_dim, rng);
  }
}

template <typename T>
void Model<T>::add_linear(const std::string& prefix, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Tensor<T> w(Shape{in, out});
  for (auto& v : w.data()) v = truncated_normal<T>(rng, 0.02);
  params_.emplace(prefix + "w", w);
  params_.emplace(prefix + "b", Tensor<T>(Shape{out}));
}

template <typename T>
void Model<T>::add_norm(const std::string& prefix, std::size_t dim) {
  params_.emplace(prefix + "g", Tensor<T>(Shape{dim}, T(1)));
  params_.emplace(prefix + "b", Tensor<T>(Shape{dim}));
}

template <typename T>
Tensor<T>& Model<T>::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("model has no parameter '" + name + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& Model<T>::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("model has no parameter '" + name + "'");
  return it->second;
}

template <typename T>
void Model<T>::set_trainable(bool on) {
  for (auto& [name, t] : params_) t.set_requires_grad(on);
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template <typename T>
std::vector<std::string> Model<T>::encoder_parameter_names() const {
  std::vector<std::string> names;
  for (const auto& [name, t] : params_)
    if (name.rfind("head.", 0) != 0) names.push_back(name);
  return names;
}

template <typename T>
std::uint64_t Model<T>::encoder_parameter_count() const {
  std::uint64_t n = 0;
  for (const auto& name : encoder_parameter_names()) n += param(name).numel();
  return n;
}

template <typename T>
EncodeResult<T> Model<T>::encode(const Tensor<T>& inputs, const ops::RowMask& pad_mask, bool train,
                                 std::mt19937_64* rng, bool keep_attention) const {
  if (inputs.rank() != 3 || inputs.dim(2) != cfg_.input_dim) {
    throw DimensionError("encode: expected inputs [B, T, " + std::to_string(cfg_.input_dim) + "], got " +
                         shape_to_string(inputs.shape()));
  }
  const std::size_t b = inputs.dim(0), steps = inputs.dim(1), h = cfg_.hidden_dim;
  if (pad_mask.size() != b * steps) throw DimensionError("encode: pad_mask must hold B*T flags");
  if (steps > cfg_.max_steps) {
    throw ContractError("encode: " + std::to_string(steps) + " steps exceed max_steps " +
                        std::to_string(cfg_.max_steps) + "; chunk long utterances at ingestion");
  }
  for (std::size_t i = 0; i < b; ++i) {
    bool any_real = false;
    for (std::size_t t = 0; t < steps; ++t) any_real = any_real || !pad_mask[i * steps + t];
    if (!any_real) throw ContractError("encode: batch item " + std::to_string(i) + " is entirely padding");
  }
  if (train && cfg_.dropout > 0.0 && rng == nullptr) throw ContractError("encode: training mode needs a dropout rng");
  std::mt19937_64 unused;
  std::mt19937_64& r = rng ? *rng : unused;

  const Tensor<T> pe = sinusoidal_pe<T>(steps, h);
  Tensor<T> pe_tiled(Shape{b, steps, h});
  for (std::size_t i = 0; i < b; ++i) std::copy(pe.data().begin(), pe.data().end(), pe_tiled.ptr() + i * steps * h);

  EncodeResult<T> res;
  Tensor<T> x = ops::add(ops::linear(inputs, param("input_proj.w"), param("input_proj.b")), pe_tiled);
  res.embedding = x;
  x = ops::dropout(x, cfg_.dropout, r, train);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    x = encoder_layer(l, x, pad_mask, train, &r, keep_attention ? &res.attention : nullptr);
    res.hidden.push_back(x);
  }
  return res;
}

template <typename T>
Tensor<T> Model<T>::encoder_layer(std::size_t index, const Tensor<T>& x, const ops::RowMask& pad_mask, bool train,
                                  std::mt19937_64* rng, std::vector<Tensor<T>>* attention) const {
  const std::string p = "encoder.layer" + std::to_string(index) + ".";
  const std::size_t b = x.dim(0), steps = x.dim(1), h = cfg_.hidden_dim, a = cfg_.heads, dh = h / a;
  const double p_drop = cfg_.dropout;

  auto split_heads = [&](const Tensor<T>& t) {
    return ops::reshape(ops::permute_0213(ops::reshape(t, Shape{b, steps, a, dh})), Shape{b * a, steps, dh});
  };
  Tensor<T> q = split_heads(ops::linear(x, param(p + "attn.q_w"), param(p + "attn.q_b")));
  Tensor<T> k = split_heads(ops::linear(x, param(p + "attn.k_w"), param(p + "attn.k_b")));
  Tensor<T> v = split_heads(ops::linear(x, param(p + "attn.v_w"), param(p + "attn.v_b")));

  Tensor<T> scores = ops::scale(ops::bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  scores = ops::mask_keys(scores, pad_mask, a, static_cast<T>(kPadLogit));
  Tensor<T> probs = ops::softmax(scores);
  if (attention) attention->push_back(probs);
  probs = ops::dropout(probs, p_drop, *rng, train);

  Tensor<T> ctx = ops::bmm(probs, v);
  ctx = ops::reshape(ops::permute_0213(ops::reshape(ctx, Shape{b, a, steps, dh})), Shape{b, steps, h});
  Tensor<T> attn_out = ops::linear(ctx, param(p + "attn.out_w"), param(p + "attn.out_b"));
  attn_out = ops::dropout(attn_out, p_drop, *rng, train);
  Tensor<T> y = ops::layer_norm(ops::add(x, attn_out), param(p + "attn.ln_g"), param(p + "attn.ln_b"),
                                static_cast<T>(kLayerNormEps));

  Tensor<T> f = ops::gelu(ops::linear(y, param(p + "ffn.in_w"), param(p + "ffn.in_b")));
  f = ops::linear(f, param(p + "ffn.out_w"), param(p + "ffn.out_b"));
  f = ops::dropout(f, p_drop, *rng, train);
  return ops::layer_norm(ops::add(y, f), param(p + "ffn.ln_g"), param(p + "ffn.ln_b"),
                         static_cast<T>(kLayerNormEps));
}

template <typename T>
Tensor<T> Model<T>::predict_frames(const Tensor<T>& last_hidden) const {
  if (!with_head_) throw ContractError("predict_frames: model was built without a prediction head");
  if (last_hidden.rank() != 3 || last_hidden.dim(2) != cfg_.hidden_dim) {
    throw DimensionError("predict_frames: expected [B, T, " + std::to_string(cfg_.hidden_dim) + "], got " +
                         shape_to_string(last_hidden.shape()));
  }
  Tensor<T> z = ops::gelu(ops::linear(last_hidden, param("head.dense_w"), param("head.dense_b")));
  z = ops::layer_norm(z, param("head.ln_g"), param("head.ln_b"), static_cast<T>(kLayerNormEps));
  return ops::linear(z, param("head.out_w"), param("head.out_b"));
}

template Tensor<float> sinusoidal_pe<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_pe<double>(std::size_t, std::size_t);
template class Model<float>;
template class Model<double>;

}  // namespace mam::model

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

// Bidirectional Transformer encoder for spectrogram frames and the frame
// reconstruction head used only during pre-training.
//
// inputs [B, T, input_dim] -> Linear -> + sinusoidal PE -> L post-LN encoder
// layers (self-attention, then GELU feed-forward; each sub-layer wrapped in
// residual + layer norm). Every layer's output is kept so representations can
// be taken from the last layer or mixed across layers.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mam/ops.hpp"
#include "mam/tensor.hpp"

namespace mam::model {

enum class TargetKind : std::uint8_t { mel = 0, linear = 1 };

const char* to_string(TargetKind kind);

struct EncoderConfig {
  std::size_t hidden_dim = 768;
  std::size_t ff_dim = 3072;
  std::size_t heads = 12;
  std::size_t layers = 3;
  int downsample = 1;
  int consecutive = 7;
  std::size_t input_dim = 160;   // base feature dim × downsample
  std::size_t target_dim = 160;  // base target dim × downsample
  double dropout = 0.1;
  TargetKind target_kind = TargetKind::mel;
  std::size_t max_steps = 1500;

  /// Three layers, Mel target, no downsampling, blocks of 7.
  static EncoderConfig base(std::size_t mel_dim = 160);
  /// Twelve layers, linear target, 3× stacking, blocks of 3.
  static EncoderConfig large(std::size_t mel_dim = 160, std::size_t linear_dim = 201);
  /// Desk-scale preset: H=64, F=256, A=4, L=2.
  static EncoderConfig tiny(std::size_t mel_dim = 160);
  static EncoderConfig preset(const std::string& name, std::size_t mel_dim = 160, std::size_t linear_dim = 201);

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Input projection plus encoder layers; the prediction head and the
/// positional encoding are not counted.
std::uint64_t count_parameters(const EncoderConfig& cfg);

/// PE[pos, 2i] = sin(pos / 10000^(2i/dim)), PE[pos, 2i+1] = cos(same).
template <typename T>
Tensor<T> sinusoidal_pe(std::size_t t_len, std::size_t dim);

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kPadLogit = -1e9;

template <typename T>
struct EncodeResult {
  /// One [B, T, H] tensor per encoder layer, first to last.
  std::vector<Tensor<T>> hidden;
  /// Projected input plus positional encoding, [B, T, H].
  Tensor<T> embedding;
  /// Per-layer attention probabilities [B·A, T, T]; filled on request.
  std::vector<Tensor<T>> attention;

  const Tensor<T>& last() const { return hidden.back(); }
};

/// Encoder weights plus the optional reconstruction head. Parameters live in
/// a name-ordered map using stable checkpoint names:
///   input_proj.{w,b}
///   encoder.layer{i}.attn.{q_w,q_b,k_w,k_b,v_w,v_b,out_w,out_b,ln_g,ln_b}
///   encoder.layer{i}.ffn.{in_w,in_b,out_w,out_b,ln_g,ln_b}
///   head.{dense_w,dense_b,ln_g,ln_b,out_w,out_b}
/// Weight matrices are stored [in, out].
template <typename T>
class Model {
 public:
  using ParameterMap = std::map<std::string, Tensor<T>>;

  Model(const EncoderConfig& cfg, std::uint64_t seed, bool with_head = true);

  const EncoderConfig& config() const { return cfg_; }
  bool has_head() const { return with_head_; }

  ParameterMap& parameters() { return params_; }
  const ParameterMap& parameters() const { return params_; }
  Tensor<T>& param(const std::string& name);
  const Tensor<T>& param(const std::string& name) const;

  /// Marks every parameter as requiring (or not) a gradient.
  void set_trainable(bool on);
  void zero_grad();

  /// inputs [B, T, input_dim]; pad_mask holds B·T flags, true at padding.
  /// Throws DimensionError on shape mismatch and ContractError when an item
  /// is entirely padding. `rng` drives dropout and is required in training.
  EncodeResult<T> encode(const Tensor<T>& inputs, const ops::RowMask& pad_mask, bool train,
                         std::mt19937_64* rng = nullptr, bool keep_attention = false) const;

  /// Reconstruction head on the last hidden layer: [B, T, H] -> [B, T, target_dim].
  Tensor<T> predict_frames(const Tensor<T>& last_hidden) const;

  /// Names of encoder (non-head) parameters.
  std::vector<std::string> encoder_parameter_names() const;
  std::uint64_t encoder_parameter_count() const;

 private:
  Tensor<T> encoder_layer(std::size_t index, const Tensor<T>& x, const ops::RowMask& pad_mask, bool train,
                          std::mt19937_64* rng, std::vector<Tensor<T>>* attention) const;
  void add_linear(const std::string& prefix, std::size_t in, std::size_t out, std::mt19937_64& rng);
  void add_norm(const std::string& prefix, std::size_t dim);

  EncoderConfig cfg_;
  bool with_head_;
  ParameterMap params_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mam::model

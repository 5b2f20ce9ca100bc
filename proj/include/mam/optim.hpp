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

// Learning-rate schedule, Adam and gradient clipping.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mam/tensor.hpp"

namespace mam::optim {

struct TrainSchedule {
  std::uint64_t total_steps = 500000;
  double warmup_fraction = 0.07;
  double peak_lr = 4e-4;
  std::size_t batch_size = 6;
  double dropout = 0.1;

  std::uint64_t warmup_steps() const;
  void validate() const;

  static TrainSchedule pretraining() { return {}; }
  static TrainSchedule finetuning() {
    TrainSchedule s;
    s.peak_lr = 4e-3;
    return s;
  }
};

/// Linear ramp 0 → peak over the warmup steps, then linear decay to 0 at
/// total_steps. Throws ContractError outside [0, total_steps].
double lr_at(std::uint64_t step, const TrainSchedule& sched);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
};

struct ParamRef {
  std::string name;
  Tensor<float>* tensor = nullptr;
  /// Multiplies the step's learning rate; 0 freezes the parameter.
  double lr_scale = 1.0;
};

/// One bias-corrected Adam update of every parameter. A parameter without a
/// gradient buffer is treated as having a zero gradient. Any non-finite
/// gradient aborts the step (nothing is modified) with a NumericError naming
/// the tensor.
void adam_step(std::span<const ParamRef> params, AdamState& state, double lr);

/// Global L2 norm of all gradients.
double grad_norm(std::span<const ParamRef> params);

/// Rescales gradients so their global norm is at most max_norm (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(std::span<const ParamRef> params, double max_norm);

}  // namespace mam::optim

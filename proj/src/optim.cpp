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

#include "mam/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mam/error.hpp"

namespace mam::optim {

std::uint64_t TrainSchedule::warmup_steps() const {
  return static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

void TrainSchedule::validate() const {
  if (total_steps == 0) throw ContractError("schedule: total_steps must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ContractError("schedule: warmup_fraction must lie in (0, 1)");
  if (!(peak_lr > 0.0)) throw ContractError("schedule: peak_lr must be positive");
  if (batch_size == 0) throw ContractError("schedule: batch_size must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ContractError("schedule: dropout must lie in [0, 1)");
}

double lr_at(std::uint64_t step, const TrainSchedule& sched) {
  sched.validate();
  if (step > sched.total_steps) {
    throw ContractError("lr_at: step " + std::to_string(step) + " is beyond total_steps " +
                        std::to_string(sched.total_steps));
  }
  const std::uint64_t warm = sched.warmup_steps();
  if (step <= warm) {
    if (warm == 0) return sched.peak_lr;
    return sched.peak_lr * (static_cast<double>(step) / static_cast<double>(warm));
  }
  const auto remaining = static_cast<double>(sched.total_steps - step);
  return sched.peak_lr * (remaining / static_cast<double>(sched.total_steps - warm));
}

void adam_step(std::span<const ParamRef> params, AdamState& state, double lr) {
  for (const auto& p : params) {
    if (p.tensor->has_grad() && !std::all_of(p.tensor->grad().begin(), p.tensor->grad().end(),
                                             [](float g) { return std::isfinite(g); })) {
      throw NumericError("adam_step: non-finite gradient in tensor '" + p.name + "'");
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& p : params) {
    Tensor<float>& w = *p.tensor;
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.size() != w.numel()) {
      m.assign(w.numel(), 0.0f);
      v.assign(w.numel(), 0.0f);
    }
    const bool has_grad = w.has_grad();
    const auto grad = w.grad();
    const double step_lr = lr * p.lr_scale;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      m[i] = static_cast<float>(c.beta1 * m[i] + (1.0 - c.beta1) * g);
      v[i] = static_cast<float>(c.beta2 * v[i] + (1.0 - c.beta2) * g * g);
      if (step_lr == 0.0) continue;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<float>(w[i] - step_lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

double grad_norm(std::span<const ParamRef> params) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) continue;
    for (float g : p.tensor->grad()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

double clip_grad_norm(std::span<const ParamRef> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<float>(max_norm / (norm + 1e-6));
    for (const auto& p : params) {
      if (!p.tensor->has_grad()) continue;
      for (auto& g : p.tensor->mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace mam::optim

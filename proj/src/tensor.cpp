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

#include "mam/tensor.hpp"

#include <algorithm>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mam {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorStorage<T>>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorStorage<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item(): tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(impl_->shape, impl_->data);
}

namespace {
template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;

#if defined(__GLIBC__)
// Activations are allocated and freed every step; keep them on the heap
// instead of round-tripping through mmap and fresh page faults.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif
}  // namespace

template <typename T>
Tape<T>::Recording::Recording(Tape* tape) : previous_(g_active_tape<T>) {
  g_active_tape<T> = tape;
}

template <typename T>
Tape<T>::Recording::~Recording() {
  g_active_tape<T> = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return g_active_tape<T>;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a one-element tensor");
  }
  const auto& root = loss.storage();
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [&](const Entry& e) { return e.output == root; });
  if (it == entries_.rend()) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  root->ensure_grad()[0] = T(1);
  for (; it != entries_.rend(); ++it) {
    // Nodes the loss does not depend on never received a gradient.
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace mam

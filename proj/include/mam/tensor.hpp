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

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape route gradients back to parameters. Use clone() for a deep
// copy. Operations (see ops.hpp) record themselves on the calling thread's
// active Tape when at least one input requires a gradient; with no active
// tape nothing is recorded and the forward pass runs as plain numerics.
//
//   Tape<float> tape;
//   {
//     auto rec = tape.record();
//     auto loss = ops::sum(ops::mul(x, x));
//     tape.backward(loss);
//   }

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mam/error.hpp"

namespace mam {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  // Empty until a backward pass writes into it.
  std::vector<T> grad;
  bool requires_grad = false;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  /// The single value of a one-element tensor.
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy; the result is a leaf that does not require a gradient.
  Tensor clone() const;

  const std::shared_ptr<TensorStorage<T>>& storage() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorStorage<T>> impl_;
};

/// Ordered record of executed operations. Entries are appended in execution
/// order, so every entry's inputs were produced by earlier entries (or are
/// leaves) and replaying the list backwards is a valid topological sweep.
template <typename T>
class Tape {
 public:
  using StoragePtr = std::shared_ptr<TensorStorage<T>>;

  struct Entry {
    std::string op;
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    // Reads output->grad and accumulates into the grads of inputs that
    // require one.
    std::function<void()> backward;
  };

  /// RAII guard that makes a tape the thread's active recorder.
  class Recording {
   public:
    explicit Recording(Tape* tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] Recording record() { return Recording(this); }

  static Tape* active();

  void push(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Seeds d(loss)/d(loss) = 1 and replays every entry once in reverse.
  /// Throws ContractError unless loss is a one-element tensor produced on
  /// this tape.
  void backward(const Tensor<T>& loss);

  /// Drops all entries (and with them the intermediate activations).
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// Runs tape.backward(loss).
template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mam

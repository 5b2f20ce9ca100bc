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

#include "mam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <numbers>

#include "kernels.hpp"

namespace mam::ops {

namespace {

template <typename T>
using StoragePtr = std::shared_ptr<TensorStorage<T>>;

[[noreturn]] void dim_error(const std::string& op, const std::string& what) {
  throw DimensionError(op + ": " + what);
}

template <typename T>
void check_output(const Tensor<T>& out, const char* op) {
#ifndef NDEBUG
  if (!all_finite<T>(out.data())) throw NumericError(std::string(op) + ": produced a non-finite value");
#else
  (void)out;
  (void)op;
#endif
}

// Records `out` on the active tape when any input requires a gradient.
template <typename T, typename Fn>
void record(const char* op, std::initializer_list<const Tensor<T>*> inputs, Tensor<T>& out,
            Fn&& backward) {
  check_output(out, op);
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return;
  bool any = false;
  for (const auto* t : inputs) any = any || (t->defined() && t->requires_grad());
  if (!any) return;
  out.set_requires_grad(true);
  typename Tape<T>::Entry entry;
  entry.op = op;
  for (const auto* t : inputs) {
    if (t->defined()) entry.inputs.push_back(t->storage());
  }
  entry.output = out.storage();
  entry.backward = std::forward<Fn>(backward);
  tape->push(std::move(entry));
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    dim_error(op, "shape " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

template <typename T>
std::size_t last_dim(const char* op, const Tensor<T>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) dim_error(op, "last dimension is empty");
  return x.shape().back();
}

}  // namespace

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) dim_error("matmul", "operands must be 2-D");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    dim_error("matmul", "inner dimensions " + shape_to_string(a.shape()) + " · " +
                            shape_to_string(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nn(m, n, k, a.ptr(), b.ptr(), out.ptr(), false);
  auto* sa = a.storage().get();
  auto* sb = b.storage().get();
  auto* so = out.storage().get();
  record<T>("matmul", {&a, &b}, out, [=] {
    if (sa->requires_grad)
      kernels::gemm_nt(m, k, n, so->grad.data(), sb->data.data(), sa->ensure_grad().data(), true);
    if (sb->requires_grad)
      kernels::gemm_tn(k, n, m, sa->data.data(), so->grad.data(), sb->ensure_grad().data(), true);
  });
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 2) dim_error("linear", "weight must be 2-D");
  const std::size_t k = w.dim(0), n = w.dim(1);
  if (x.rank() == 0 || x.shape().back() != k) {
    dim_error("linear", "input " + shape_to_string(x.shape()) + " vs weight " +
                            shape_to_string(w.shape()));
  }
  if (bias.defined() && (bias.numel() != n)) dim_error("linear", "bias size mismatch");
  const std::size_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  T* o = out.ptr();
  if (bias.defined()) {
    for (std::size_t i = 0; i < m; ++i) std::copy_n(bias.ptr(), n, o + i * n);
  }
  kernels::gemm_nn(m, n, k, x.ptr(), w.ptr(), o, bias.defined());
  auto* sx = x.storage().get();
  auto* sw = w.storage().get();
  auto* sb = bias.defined() ? bias.storage().get() : nullptr;
  auto* so = out.storage().get();
  record<T>("linear", {&x, &w, &bias}, out, [=] {
    const T* g = so->grad.data();
    if (sx->requires_grad) kernels::gemm_nt(m, k, n, g, sw->data.data(), sx->ensure_grad().data(), true);
    if (sw->requires_grad) kernels::gemm_tn(k, n, m, sx->data.data(), g, sw->ensure_grad().data(), true);
    if (sb && sb->requires_grad) {
      auto& gb = sb->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3) dim_error("bmm", "operands must be 3-D");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t p = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    dim_error("bmm", shape_to_string(a.shape()) + " · " + shape_to_string(b.shape()) +
                         (transpose_b ? "ᵀ" : ""));
  }
  Tensor<T> out(Shape{batch, m, p});
  for (std::size_t i = 0; i < batch; ++i) {
    const T* ai = a.ptr() + i * m * k;
    const T* bi = b.ptr() + i * k * p;
    T* oi = out.ptr() + i * m * p;
    if (transpose_b)
      kernels::gemm_nt(m, p, k, ai, bi, oi, false);
    else
      kernels::gemm_nn(m, p, k, ai, bi, oi, false);
  }
  auto* sa = a.storage().get();
  auto* sb = b.storage().get();
  auto* so = out.storage().get();
  record<T>("bmm", {&a, &b}, out, [=] {
    for (std::size_t i = 0; i < batch; ++i) {
      const T* g = so->grad.data() + i * m * p;
      const T* ai = sa->data.data() + i * m * k;
      const T* bi = sb->data.data() + i * k * p;
      if (sa->requires_grad) {
        T* ga = sa->ensure_grad().data() + i * m * k;
        if (transpose_b)
          kernels::gemm_nn(m, k, p, g, bi, ga, true);  // dA = dC · B, B is [p, k]
        else
          kernels::gemm_nt(m, k, p, g, bi, ga, true);  // dA = dC · Bᵀ
      }
      if (sb->requires_grad) {
        T* gb = sb->ensure_grad().data() + i * k * p;
        if (transpose_b)
          kernels::gemm_tn(p, k, m, g, ai, gb, true);  // dB = dCᵀ · A
        else
          kernels::gemm_tn(k, p, m, ai, g, gb, true);  // dB = Aᵀ · dC
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    dim_error("reshape", shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("reshape", {&x}, out, [=] {
    auto& gx = sx->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += so->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> permute_0213(const Tensor<T>& x) {
  if (x.rank() != 4) dim_error("permute_0213", "input must be 4-D");
  const std::size_t d0 = x.dim(0), d1 = x.dim(1), d2 = x.dim(2), d3 = x.dim(3);
  Tensor<T> out(Shape{d0, d2, d1, d3});
  // Maps (i, a, b, :) of the input onto (i, b, a, :) of the output.
  auto move = [=](const T* src, T* dst, bool forward, bool acc) {
    for (std::size_t i = 0; i < d0; ++i)
      for (std::size_t a = 0; a < d1; ++a)
        for (std::size_t b = 0; b < d2; ++b) {
          const std::size_t in_off = ((i * d1 + a) * d2 + b) * d3;
          const std::size_t out_off = ((i * d2 + b) * d1 + a) * d3;
          const T* s = src + (forward ? in_off : out_off);
          T* d = dst + (forward ? out_off : in_off);
          for (std::size_t c = 0; c < d3; ++c) d[c] = acc ? d[c] + s[c] : s[c];
        }
  };
  move(x.ptr(), out.ptr(), true, false);
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("permute_0213", {&x}, out,
            [=] { move(so->grad.data(), sx->ensure_grad().data(), false, true); });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  auto* sa = a.storage().get();
  auto* sb = b.storage().get();
  auto* so = out.storage().get();
  record<T>("add", {&a, &b}, out, [=] {
    for (auto* s : {sa, sb}) {
      if (!s->requires_grad) continue;
      auto& g = s->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  auto* sa = a.storage().get();
  auto* sb = b.storage().get();
  auto* so = out.storage().get();
  record<T>("mul", {&a, &b}, out, [=] {
    if (sa->requires_grad) {
      auto& g = sa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i] * sb->data[i];
    }
    if (sb->requires_grad) {
      auto& g = sb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i] * sa->data[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * factor;
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("scale", {&x}, out, [=] {
    auto& g = sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("sum", {&x}, out, [=] {
    auto& g = sx->ensure_grad();
    for (auto& v : g) v += so->grad[0];
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t d = last_dim("softmax", x);
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xi = x.ptr() + r * d;
    T* yi = out.ptr() + r * d;
    const T mx = *std::max_element(xi, xi + d);
    T z = 0;
    for (std::size_t j = 0; j < d; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    for (std::size_t j = 0; j < d; ++j) yi[j] /= z;
  }
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("softmax", {&x}, out, [=] {
    auto& gx = sx->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = so->data.data() + r * d;
      const T* gy = so->grad.data() + r * d;
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (gy[j] - dot);
    }
  });
  return out;
}

template <typename T>
Tensor<T> mask_keys(const Tensor<T>& scores, const RowMask& key_pad, std::size_t heads, T bias) {
  if (scores.rank() != 3 || heads == 0 || scores.dim(0) % heads != 0)
    dim_error("mask_keys", "scores must be [batch*heads, Tq, Tk]");
  const std::size_t batch = scores.dim(0) / heads, tq = scores.dim(1), tk = scores.dim(2);
  if (key_pad.size() != batch * tk) dim_error("mask_keys", "key_pad must hold batch*Tk flags");
  Tensor<T> out = scores.clone();
  for (std::size_t n = 0; n < scores.dim(0); ++n) {
    const std::uint8_t* pad = key_pad.data() + (n / heads) * tk;
    for (std::size_t q = 0; q < tq; ++q) {
      T* row = out.ptr() + (n * tq + q) * tk;
      for (std::size_t k = 0; k < tk; ++k)
        if (pad[k]) row[k] += bias;
    }
  }
  auto* ss = scores.storage().get();
  auto* so = out.storage().get();
  record<T>("mask_keys", {&scores}, out, [=] {
    auto& g = ss->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64& rng, bool train) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  const T keep_scale = T(1) / static_cast<T>(1.0 - p);
  auto keep = std::make_shared<std::vector<T>>(x.numel());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    (*keep)[i] = u(rng) >= p ? keep_scale : T(0);
    out[i] = x[i] * (*keep)[i];
  }
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("dropout", {&x}, out, [=] {
    auto& g = sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i] * (*keep)[i];
  });
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("gelu", {&x}, out, [=] {
    auto& g = sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = sx->data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += so->grad[i] * (cdf + v * pdf);
    }
  });
  return out;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("tanh", {&x}, out, [=] {
    auto& g = sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = so->data[i];
      g[i] += so->grad[i] * (T(1) - y * y);
    }
  });
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = last_dim("layer_norm", x);
  if (gamma.numel() != d || beta.numel() != d) dim_error("layer_norm", "gamma/beta size mismatch");
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xi = x.ptr() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xi[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gamma[j] * h + beta[j];
    }
  }
  auto* sx = x.storage().get();
  auto* sg = gamma.storage().get();
  auto* sb = beta.storage().get();
  auto* so = out.storage().get();
  record<T>("layer_norm", {&x, &gamma, &beta}, out, [=] {
    std::vector<T> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gy = so->grad.data() + r * d;
      const T* h = xhat->data() + r * d;
      if (sg->requires_grad) {
        auto& gg = sg->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) gg[j] += gy[j] * h[j];
      }
      if (sb->requires_grad) {
        auto& gb = sb->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) gb[j] += gy[j];
      }
      if (!sx->requires_grad) continue;
      T mean_d = 0, mean_dh = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dxhat[j] = gy[j] * sg->data[j];
        mean_d += dxhat[j];
        mean_dh += dxhat[j] * h[j];
      }
      mean_d /= static_cast<T>(d);
      mean_dh /= static_cast<T>(d);
      auto& gx = sx->ensure_grad();
      const T is = (*inv_std)[r];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += is * (dxhat[j] - mean_d - h[j] * mean_dh);
    }
  });
  return out;
}

template <typename T>
Tensor<T> masked_l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const RowMask& select) {
  require_same_shape("masked_l1_loss", pred, target);
  const std::size_t d = last_dim("masked_l1_loss", pred);
  const std::size_t rows = pred.numel() / d;
  if (select.size() != rows) {
    dim_error("masked_l1_loss", "select has " + std::to_string(select.size()) + " flags for " +
                                    std::to_string(rows) + " rows");
  }
  const auto n_sel = static_cast<std::size_t>(std::count_if(select.begin(), select.end(),
                                                            [](std::uint8_t s) { return s != 0; }));
  if (n_sel == 0) throw ContractError("masked_l1_loss: empty selection, loss is undefined");
  const T denom = static_cast<T>(n_sel * d);
  T acc = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!select[r]) continue;
    for (std::size_t j = 0; j < d; ++j) acc += std::abs(pred[r * d + j] - target[r * d + j]);
  }
  Tensor<T> out = Tensor<T>::scalar(acc / denom);
  auto* sp = pred.storage().get();
  auto* st = target.storage().get();
  auto* so = out.storage().get();
  auto sel = std::make_shared<RowMask>(select);
  record<T>("masked_l1_loss", {&pred, &target}, out, [=] {
    const T g = so->grad[0] / denom;
    for (auto* s : {sp, st}) {
      if (!s->requires_grad) continue;
      const T sign_flip = (s == sp) ? T(1) : T(-1);
      auto& gs = s->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        if (!(*sel)[r]) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const T diff = sp->data[r * d + j] - st->data[r * d + j];
          const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
          gs[r * d + j] += sign_flip * sgn * g;
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) dim_error("cross_entropy", "logits must be [N, C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) dim_error("cross_entropy", "label count does not match rows");
  auto probs = std::make_shared<std::vector<T>>(n * c);
  std::size_t used = 0;
  T acc = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.ptr() + r * c;
    T* p = probs->data() + r * c;
    const T mx = *std::max_element(z, z + c);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(z[j] - mx);
      s += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= s;
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    }
    acc += -(z[labels[r]] - mx - std::log(s));
    ++used;
  }
  if (used == 0) throw ContractError("cross_entropy: no labelled rows");
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(used));
  auto* sl = logits.storage().get();
  auto* so = out.storage().get();
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  record<T>("cross_entropy", {&logits}, out, [=] {
    auto& g = sl->ensure_grad();
    const T scale_g = so->grad[0] / static_cast<T>(used);
    for (std::size_t r = 0; r < n; ++r) {
      const int y = (*lab)[r];
      if (y < 0) continue;
      for (std::size_t j = 0; j < c; ++j) {
        const T onehot = static_cast<int>(j) == y ? T(1) : T(0);
        g[r * c + j] += scale_g * ((*probs)[r * c + j] - onehot);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& layers, const Tensor<T>& weights) {
  if (layers.empty()) throw ContractError("weighted_sum: no layers");
  if (weights.numel() != layers.size()) dim_error("weighted_sum", "one weight per layer required");
  for (const auto& l : layers) require_same_shape("weighted_sum", layers.front(), l);
  Tensor<T> out(layers.front().shape());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const T w = weights[l];
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += w * layers[l][i];
  }
  std::vector<TensorStorage<T>*> ls;
  for (const auto& l : layers) ls.push_back(l.storage().get());
  auto* sw = weights.storage().get();
  auto* so = out.storage().get();
  auto fn = [=] {
    for (std::size_t l = 0; l < ls.size(); ++l) {
      if (sw->requires_grad) {
        T dot = 0;
        for (std::size_t i = 0; i < so->grad.size(); ++i) dot += so->grad[i] * ls[l]->data[i];
        sw->ensure_grad()[l] += dot;
      }
      if (ls[l]->requires_grad) {
        auto& g = ls[l]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i] * sw->data[l];
      }
    }
  };
  // record() takes a fixed list; layers beyond it are tracked through the entry.
  check_output(out, "weighted_sum");
  Tape<T>* tape = Tape<T>::active();
  bool any = weights.requires_grad();
  for (const auto& l : layers) any = any || l.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    typename Tape<T>::Entry entry;
    entry.op = "weighted_sum";
    for (const auto& l : layers) entry.inputs.push_back(l.storage());
    entry.inputs.push_back(weights.storage());
    entry.output = out.storage();
    entry.backward = fn;
    tape->push(std::move(entry));
  }
  return out;
}

template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& factor) {
  if (factor.numel() != 1) dim_error("scale_by", "factor must have one element");
  Tensor<T> out(x.shape());
  const T f = factor[0];
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f * x[i];
  auto* sx = x.storage().get();
  auto* sf = factor.storage().get();
  auto* so = out.storage().get();
  record<T>("scale_by", {&x, &factor}, out, [=] {
    if (sf->requires_grad) {
      T dot = 0;
      for (std::size_t i = 0; i < so->grad.size(); ++i) dot += so->grad[i] * sx->data[i];
      sf->ensure_grad()[0] += dot;
    }
    if (sx->requires_grad) {
      auto& g = sx->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i] * sf->data[0];
    }
  });
  return out;
}

template <typename T>
Tensor<T> time_step(const Tensor<T>& x, std::size_t t) {
  if (x.rank() != 3) dim_error("time_step", "input must be [B, T, D]");
  const std::size_t b = x.dim(0), steps = x.dim(1), d = x.dim(2);
  if (t >= steps) dim_error("time_step", "step out of range");
  Tensor<T> out(Shape{b, d});
  for (std::size_t i = 0; i < b; ++i) std::copy_n(x.ptr() + (i * steps + t) * d, d, out.ptr() + i * d);
  auto* sx = x.storage().get();
  auto* so = out.storage().get();
  record<T>("time_step", {&x}, out, [=] {
    auto& g = sx->ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) g[(i * steps + t) * d + j] += so->grad[i * d + j];
  });
  return out;
}

template <typename T>
Tensor<T> select_rows(const Tensor<T>& a, const Tensor<T>& b, const RowMask& take) {
  require_same_shape("select_rows", a, b);
  if (a.rank() != 2 || take.size() != a.dim(0)) dim_error("select_rows", "expects [B, D] and B flags");
  const std::size_t rows = a.dim(0), d = a.dim(1);
  Tensor<T> out(a.shape());
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n((take[r] ? a.ptr() : b.ptr()) + r * d, d, out.ptr() + r * d);
  auto* sa = a.storage().get();
  auto* sb = b.storage().get();
  auto* so = out.storage().get();
  auto tk = std::make_shared<RowMask>(take);
  record<T>("select_rows", {&a, &b}, out, [=] {
    for (std::size_t r = 0; r < rows; ++r) {
      auto* s = (*tk)[r] ? sa : sb;
      if (!s->requires_grad) continue;
      auto& g = s->ensure_grad();
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += so->grad[r * d + j];
    }
  });
  return out;
}

#define MAM_INSTANTIATE_OPS(T)                                                                 \
  template bool all_finite<T>(std::span<const T>);                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> permute_0213(const Tensor<T>&);                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> softmax(const Tensor<T>&);                                                \
  template Tensor<T> mask_keys(const Tensor<T>&, const RowMask&, std::size_t, T);              \
  template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64&, bool);                \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                                   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> masked_l1_loss(const Tensor<T>&, const Tensor<T>&, const RowMask&);       \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                    \
  template Tensor<T> weighted_sum(const std::vector<Tensor<T>>&, const Tensor<T>&);            \
  template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> time_step(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> select_rows(const Tensor<T>&, const Tensor<T>&, const RowMask&);

MAM_INSTANTIATE_OPS(float)
MAM_INSTANTIATE_OPS(double)

#undef MAM_INSTANTIATE_OPS

}  // namespace mam::ops

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

// Row-major GEMM kernels. Loop orders are fixed so results are bitwise
// reproducible run to run.

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace mam::kernels {

namespace detail {

inline constexpr std::size_t kRows = 4;
inline constexpr std::size_t kCols = 256;

// Accumulates R rows of C over columns [j0, j1): crow[r][j] += Σ_p a(r, p) · b[p, j]
// with p ascending. `a_at(r, p)` reads the left operand.
template <typename T, std::size_t R, typename AAt>
inline void row_block(std::size_t k, std::size_t n, std::size_t j0, std::size_t j1, AAt a_at, const T* b,
                      T* const* crow) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n;
    for (std::size_t r = 0; r < R; ++r) {
      const T av = a_at(r, p);
      if (av == T(0)) continue;
      T* cr = crow[r];
      for (std::size_t j = j0; j < j1; ++j) cr[j] += av * brow[j];
    }
  }
}

template <typename T, typename AAt>
inline void gemm_rows(std::size_t m, std::size_t n, std::size_t k, AAt a_at, const T* b, T* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = T(0);
  }
  for (std::size_t i0 = 0; i0 < m; i0 += kRows) {
    const std::size_t rows = std::min(kRows, m - i0);
    T* crow[kRows];
    for (std::size_t r = 0; r < rows; ++r) crow[r] = c + (i0 + r) * n;
    for (std::size_t j0 = 0; j0 < n; j0 += kCols) {
      const std::size_t j1 = std::min(n, j0 + kCols);
      auto at = [&](std::size_t r, std::size_t p) { return a_at(i0 + r, p); };
      switch (rows) {
        case 4: row_block<T, 4>(k, n, j0, j1, at, b, crow); break;
        case 3: row_block<T, 3>(k, n, j0, j1, at, b, crow); break;
        case 2: row_block<T, 2>(k, n, j0, j1, at, b, crow); break;
        default: row_block<T, 1>(k, n, j0, j1, at, b, crow); break;
      }
    }
  }
}

}  // namespace detail

// C[M,N] (+)= A[M,K] · B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  detail::gemm_rows<T>(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c, accumulate);
}

// C[M,N] (+)= Aᵀ · B with A[K,M], B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  detail::gemm_rows<T>(m, n, k, [a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c, accumulate);
}

// C[M,N] (+)= A · Bᵀ with A[M,K], B[N,K]
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace mam::kernels

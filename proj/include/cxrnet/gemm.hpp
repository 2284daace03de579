#pragma once

#include <algorithm>
#include <cstdint>

#include "cxrnet/parallel.hpp"

namespace cxrnet::detail {

// Register-blocked GEMM kernels. Every C element accumulates its k terms in
// ascending order, in full blocks and tails alike, so a result never depends
// on thread count or block boundaries. No fast-math reassociation is assumed.

inline constexpr int kGemmMr = 4;
inline constexpr int kGemmNr = 16;

/// 4 x 16 register tile. a_tile(p, ii) reads the left operand for C row
/// i0 + ii at depth p; b points at (0, j0).
template <typename T, bool kAccumulate, typename ATile>
inline void gemm_micro(std::int64_t k, ATile&& a_tile, const T* b, std::int64_t ldb, T* c,
                       std::int64_t ldc) {
  constexpr int MR = kGemmMr;
  constexpr int NR = kGemmNr;
  T acc[MR][NR];
  if constexpr (kAccumulate) {
    for (int ii = 0; ii < MR; ++ii)
      for (int jj = 0; jj < NR; ++jj) acc[ii][jj] = c[ii * ldc + jj];
  } else {
    for (int ii = 0; ii < MR; ++ii)
      for (int jj = 0; jj < NR; ++jj) acc[ii][jj] = T(0);
  }
  for (std::int64_t p = 0; p < k; ++p) {
    const T* brow = b + p * ldb;
    T bb[NR];
#pragma GCC unroll 16
    for (int jj = 0; jj < NR; ++jj) bb[jj] = brow[jj];
    T av[MR];
#pragma GCC unroll 4
    for (int ii = 0; ii < MR; ++ii) av[ii] = a_tile(p, ii);
#pragma GCC unroll 4
    for (int ii = 0; ii < MR; ++ii) {
#pragma GCC unroll 16
      for (int jj = 0; jj < NR; ++jj) acc[ii][jj] += av[ii] * bb[jj];
    }
  }
  for (int ii = 0; ii < MR; ++ii)
    for (int jj = 0; jj < NR; ++jj) c[ii * ldc + jj] = acc[ii][jj];
}

/// Scalar fallback for partial tiles; same per-element accumulation order.
template <typename T, typename ATile>
inline void gemm_tail(std::int64_t mb, std::int64_t nb, std::int64_t k, ATile&& a_tile, const T* b,
                      std::int64_t ldb, T* c, std::int64_t ldc, bool accumulate) {
  for (std::int64_t ii = 0; ii < mb; ++ii) {
    T* crow = c + ii * ldc;
    if (!accumulate)
      for (std::int64_t jj = 0; jj < nb; ++jj) crow[jj] = T(0);
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = a_tile(p, ii);
      const T* brow = b + p * ldb;
      for (std::int64_t jj = 0; jj < nb; ++jj) crow[jj] += av * brow[jj];
    }
  }
}

template <typename T, typename ATileAt>
void gemm_rows_impl(std::int64_t r0, std::int64_t r1, std::int64_t n, std::int64_t k,
                    ATileAt&& a_tile_at, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
                    bool accumulate) {
  constexpr int MR = kGemmMr;
  constexpr int NR = kGemmNr;
  for (std::int64_t i0 = r0; i0 < r1; i0 += MR) {
    const std::int64_t mb = std::min<std::int64_t>(MR, r1 - i0);
    for (std::int64_t j0 = 0; j0 < n; j0 += NR) {
      const std::int64_t nb = std::min<std::int64_t>(NR, n - j0);
      auto tile = a_tile_at(i0);
      if (mb == MR && nb == NR) {
        if (accumulate) {
          gemm_micro<T, true>(k, tile, b + j0, ldb, c + i0 * ldc + j0, ldc);
        } else {
          gemm_micro<T, false>(k, tile, b + j0, ldb, c + i0 * ldc + j0, ldc);
        }
      } else {
        gemm_tail<T>(mb, nb, k, tile, b + j0, ldb, c + i0 * ldc + j0, ldc, accumulate);
      }
    }
  }
}

/// C(m x n) = [+=] A(m x k) * B(k x n), all row-major.
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, std::int64_t lda, const T* b, std::int64_t ldb,
             T* c, std::int64_t ldc, bool accumulate, bool allow_parallel) {
  auto tile_at = [a, lda](std::int64_t i0) {
    const T* base = a + i0 * lda;
    return [base, lda](std::int64_t p, std::int64_t ii) { return base[ii * lda + p]; };
  };
  const bool parallel = allow_parallel && m >= 2 * kGemmMr && m * n * k >= (1 << 18);
  if (!parallel) {
    gemm_rows_impl<T>(0, m, n, k, tile_at, b, ldb, c, ldc, accumulate);
    return;
  }
  parallel_for(
      m,
      [&](std::int64_t lo, std::int64_t hi) {
        gemm_rows_impl<T>(lo, hi, n, k, tile_at, b, ldb, c, ldc, accumulate);
      },
      kGemmMr);
}

/// C(m x n) = [+=] A^T * B where A is (k x m) row-major.
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, std::int64_t lda, const T* b, std::int64_t ldb,
             T* c, std::int64_t ldc, bool accumulate, bool allow_parallel) {
  auto tile_at = [a, lda](std::int64_t i0) {
    const T* base = a + i0;
    return [base, lda](std::int64_t p, std::int64_t ii) { return base[p * lda + ii]; };
  };
  const bool parallel = allow_parallel && m >= 2 * kGemmMr && m * n * k >= (1 << 18);
  if (!parallel) {
    gemm_rows_impl<T>(0, m, n, k, tile_at, b, ldb, c, ldc, accumulate);
    return;
  }
  parallel_for(
      m,
      [&](std::int64_t lo, std::int64_t hi) {
        gemm_rows_impl<T>(lo, hi, n, k, tile_at, b, ldb, c, ldc, accumulate);
      },
      kGemmMr);
}

}  // namespace cxrnet::detail

// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher has checked CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cstdint>

#include "velopick/simd/kernels.hpp"

namespace velopick::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  __m256 s2 = _mm256_setzero_ps();
  __m256 s3 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), s1);
    s2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 16), _mm256_loadu_ps(b + i + 16), s2);
    s3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 24), _mm256_loadu_ps(b + i + 24), s3);
  }
  for (; i + 8 <= n; i += 8) s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s0);
  float s = hsum(_mm256_add_ps(_mm256_add_ps(s0, s1), _mm256_add_ps(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 a = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(a, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Register-blocked update of an R x (8*V) tile of C over kc steps of K.
template <bool TransA, int R, int V>
inline void tile(std::size_t i, std::size_t j, std::size_t k0, std::size_t kc, const float* A,
                 std::size_t lda, const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  __m256 acc[R][V];
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < V; ++v) acc[r][v] = _mm256_loadu_ps(C + (i + r) * ldc + j + 8 * v);
  for (std::size_t k = k0; k < k0 + kc; ++k) {
    __m256 b[V];
    for (int v = 0; v < V; ++v) b[v] = _mm256_loadu_ps(B + k * ldb + j + 8 * v);
    for (int r = 0; r < R; ++r) {
      const float av = TransA ? A[k * lda + i + r] : A[(i + r) * lda + k];
      const __m256 a = _mm256_set1_ps(av);
      for (int v = 0; v < V; ++v) acc[r][v] = _mm256_fmadd_ps(a, b[v], acc[r][v]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < V; ++v) _mm256_storeu_ps(C + (i + r) * ldc + j + 8 * v, acc[r][v]);
}

template <bool TransA, int R>
inline void row_block(std::size_t i, std::size_t j0, std::size_t j1, std::size_t k0, std::size_t kc,
                      const float* A, std::size_t lda, const float* B, std::size_t ldb, float* C,
                      std::size_t ldc) {
  std::size_t j = j0;
  for (; j + 16 <= j1; j += 16) tile<TransA, R, 2>(i, j, k0, kc, A, lda, B, ldb, C, ldc);
  for (; j + 8 <= j1; j += 8) tile<TransA, R, 1>(i, j, k0, kc, A, lda, B, ldb, C, ldc);
  for (; j < j1; ++j) {
    for (int r = 0; r < R; ++r) {
      float s = C[(i + r) * ldc + j];
      for (std::size_t k = k0; k < k0 + kc; ++k) {
        const float av = TransA ? A[k * lda + i + r] : A[(i + r) * lda + k];
        s += av * B[k * ldb + j];
      }
      C[(i + r) * ldc + j] = s;
    }
  }
}

// K is split into panels of kBlockK and N into panels of kBlockN so that the
// B panel stays in L2 while every row block of A sweeps over it.
template <bool TransA>
void gemm_avx2(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
               const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  constexpr std::size_t kBlockK = 256;
  constexpr std::size_t kBlockN = 256;
  for (std::size_t k0 = 0; k0 < K; k0 += kBlockK) {
    const std::size_t kc = std::min(kBlockK, K - k0);
    for (std::size_t j0 = 0; j0 < N; j0 += kBlockN) {
      const std::size_t j1 = std::min(N, j0 + kBlockN);
      std::size_t i = 0;
      for (; i + 4 <= M; i += 4) row_block<TransA, 4>(i, j0, j1, k0, kc, A, lda, B, ldb, C, ldc);
      for (; i < M; ++i) row_block<TransA, 1>(i, j0, j1, k0, kc, A, lda, B, ldb, C, ldc);
    }
  }
}

void gemm_nn_avx2(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  gemm_avx2<false>(M, N, K, A, lda, B, ldb, C, ldc);
}

void gemm_tn_avx2(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  gemm_avx2<true>(M, N, K, A, lda, B, ldb, C, ldc);
}

// C[i][j] += dot(A row i, B row j). Four rows of A share each load of a B
// row; K is processed in chunks so the four A chunks stay in L1.
void gemm_nt_avx2(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  constexpr std::size_t kChunk = 1024;
  for (std::size_t k0 = 0; k0 < K; k0 += kChunk) {
    const std::size_t kc = std::min(kChunk, K - k0);
    const std::size_t kv = kc & ~std::size_t{7};
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) {
      const float* a0 = A + i * lda + k0;
      const float* a1 = a0 + lda;
      const float* a2 = a1 + lda;
      const float* a3 = a2 + lda;
      for (std::size_t j = 0; j < N; ++j) {
        const float* b = B + j * ldb + k0;
        __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
        __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
        for (std::size_t k = 0; k < kv; k += 8) {
          const __m256 bv = _mm256_loadu_ps(b + k);
          s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a0 + k), bv, s0);
          s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a1 + k), bv, s1);
          s2 = _mm256_fmadd_ps(_mm256_loadu_ps(a2 + k), bv, s2);
          s3 = _mm256_fmadd_ps(_mm256_loadu_ps(a3 + k), bv, s3);
        }
        float r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
        for (std::size_t k = kv; k < kc; ++k) {
          r0 += a0[k] * b[k];
          r1 += a1[k] * b[k];
          r2 += a2[k] * b[k];
          r3 += a3[k] * b[k];
        }
        C[i * ldc + j] += r0;
        C[(i + 1) * ldc + j] += r1;
        C[(i + 2) * ldc + j] += r2;
        C[(i + 3) * ldc + j] += r3;
      }
    }
    for (; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) C[i * ldc + j] += dot_avx2(A + i * lda + k0, B + j * ldb + k0, kc);
  }
}

void stack_accumulate_avx2(const float* x, float* sum, float* sq, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(sum + i, _mm256_add_ps(_mm256_loadu_ps(sum + i), v));
    _mm256_storeu_ps(sq + i, _mm256_fmadd_ps(v, v, _mm256_loadu_ps(sq + i)));
  }
  for (; i < n; ++i) {
    sum[i] += x[i];
    sq[i] += x[i] * x[i];
  }
}

void nmo_sample_avx2(const float* trace, std::size_t n_samples, float t_start, float inv_dt,
                     const float* t0, float slowness2, float* out, std::size_t n) {
  const float last = static_cast<float>(n_samples - 1);
  const __m256 vs2 = _mm256_set1_ps(slowness2);
  const __m256 vts = _mm256_set1_ps(t_start);
  const __m256 vinv = _mm256_set1_ps(inv_dt);
  const __m256 vzero = _mm256_setzero_ps();
  const __m256 vlast = _mm256_set1_ps(last);
  const __m256 vlast1 = _mm256_set1_ps(last - 1.0f);
  const __m256i vone = _mm256_set1_epi32(1);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m256 tz = _mm256_loadu_ps(t0 + j);
    const __m256 t = _mm256_sqrt_ps(_mm256_add_ps(_mm256_mul_ps(tz, tz), vs2));
    const __m256 p = _mm256_mul_ps(_mm256_sub_ps(t, vts), vinv);
    const __m256 valid = _mm256_and_ps(_mm256_cmp_ps(p, vzero, _CMP_GE_OQ),
                                       _mm256_cmp_ps(p, vlast, _CMP_LE_OQ));
    const __m256 i0f = _mm256_min_ps(_mm256_floor_ps(_mm256_and_ps(p, valid)), vlast1);
    const __m256 w = _mm256_sub_ps(p, i0f);
    const __m256i i0 = _mm256_cvttps_epi32(i0f);
    const __m256 f0 = _mm256_mask_i32gather_ps(vzero, trace, i0, valid, 4);
    const __m256 f1 = _mm256_mask_i32gather_ps(vzero, trace, _mm256_add_epi32(i0, vone), valid, 4);
    const __m256 v = _mm256_add_ps(f0, _mm256_mul_ps(w, _mm256_sub_ps(f1, f0)));
    _mm256_storeu_ps(out + j, _mm256_and_ps(v, valid));
  }
  if (j < n) ref::nmo_sample(trace, n_samples, t_start, inv_dt, t0 + j, slowness2, out + j, n - j);
}

void conv3x3_avx2(const float* in, std::size_t ld, std::size_t rows, std::size_t cols, const float* w,
                  float* out) {
  __m256 wv[9];
  for (int k = 0; k < 9; ++k) wv[k] = _mm256_set1_ps(w[k]);
  const std::size_t cv = cols & ~std::size_t{7};
  for (std::size_t r = 0; r < rows; ++r) {
    const float* r0 = in + r * ld;
    const float* r1 = r0 + ld;
    const float* r2 = r1 + ld;
    float* o = out + r * cols;
    for (std::size_t c = 0; c < cv; c += 8) {
      __m256 acc = _mm256_loadu_ps(o + c);
      acc = _mm256_fmadd_ps(wv[0], _mm256_loadu_ps(r0 + c), acc);
      acc = _mm256_fmadd_ps(wv[1], _mm256_loadu_ps(r0 + c + 1), acc);
      acc = _mm256_fmadd_ps(wv[2], _mm256_loadu_ps(r0 + c + 2), acc);
      acc = _mm256_fmadd_ps(wv[3], _mm256_loadu_ps(r1 + c), acc);
      acc = _mm256_fmadd_ps(wv[4], _mm256_loadu_ps(r1 + c + 1), acc);
      acc = _mm256_fmadd_ps(wv[5], _mm256_loadu_ps(r1 + c + 2), acc);
      acc = _mm256_fmadd_ps(wv[6], _mm256_loadu_ps(r2 + c), acc);
      acc = _mm256_fmadd_ps(wv[7], _mm256_loadu_ps(r2 + c + 1), acc);
      acc = _mm256_fmadd_ps(wv[8], _mm256_loadu_ps(r2 + c + 2), acc);
      _mm256_storeu_ps(o + c, acc);
    }
    for (std::size_t c = cv; c < cols; ++c) {
      float s = o[c];
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += w[3 * i + j] * in[(r + i) * ld + c + j];
      o[c] = s;
    }
  }
}

void conv3x3_wgrad_avx2(const float* in, std::size_t ld, std::size_t rows, std::size_t cols,
                        const float* dy, float* dw) {
  __m256 acc[9];
  for (auto& a : acc) a = _mm256_setzero_ps();
  float tail[9] = {};
  const std::size_t cv = cols & ~std::size_t{7};
  for (std::size_t r = 0; r < rows; ++r) {
    const float* d = dy + r * cols;
    for (std::size_t c = 0; c < cv; c += 8) {
      const __m256 g = _mm256_loadu_ps(d + c);
      for (std::size_t i = 0; i < 3; ++i) {
        const float* row = in + (r + i) * ld + c;
        acc[3 * i] = _mm256_fmadd_ps(g, _mm256_loadu_ps(row), acc[3 * i]);
        acc[3 * i + 1] = _mm256_fmadd_ps(g, _mm256_loadu_ps(row + 1), acc[3 * i + 1]);
        acc[3 * i + 2] = _mm256_fmadd_ps(g, _mm256_loadu_ps(row + 2), acc[3 * i + 2]);
      }
    }
    for (std::size_t c = cv; c < cols; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) tail[3 * i + j] += d[c] * in[(r + i) * ld + c + j];
  }
  for (int k = 0; k < 9; ++k) dw[k] += hsum(acc[k]) + tail[k];
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      "avx2",       dot_avx2,     axpy_avx2,
      gemm_nn_avx2, gemm_tn_avx2, gemm_nt_avx2,
      stack_accumulate_avx2,      nmo_sample_avx2,
      conv3x3_avx2,               conv3x3_wgrad_avx2,
  };
  return table;
}

}  // namespace velopick::simd

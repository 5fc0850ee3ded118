// SPDX-License-Identifier: Apache-2.0
//
// Portable reference kernels. These define the semantics every vectorised
// variant must reproduce; they are templated so the double-precision
// gradient checks run the exact same arithmetic.

#pragma once

#include <cmath>
#include <cstddef>

namespace velopick::simd::ref {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * ldc;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[i * lda + k];
      if (a == T(0)) continue;
      const T* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C[M x N] += A^T * B, A stored K x M
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t k = 0; k < K; ++k) {
    const T* b = B + k * ldb;
    for (std::size_t i = 0; i < M; ++i) {
      const T a = A[k * lda + i];
      if (a == T(0)) continue;
      T* c = C + i * ldc;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C[M x N] += A * B^T, B stored N x K
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) C[i * ldc + j] += dot(A + i * lda, B + j * ldb, K);
}

/// sum[i] += x[i]; sq[i] += x[i]^2
/// Direct 3x3 correlation over a zero-padded plane:
///   out[r*cols + c] += sum_ij w[3i + j] * in[(r + i)*ld + c + j]
/// `in` has rows + 2 rows of stride ld >= cols + 2.
template <typename T>
void conv3x3(const T* in, std::size_t ld, std::size_t rows, std::size_t cols, const T* w, T* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      T s = out[r * cols + c];
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += w[3 * i + j] * in[(r + i) * ld + c + j];
      out[r * cols + c] = s;
    }
}

/// Weight gradient of conv3x3: dw[3i + j] += sum_rc dy[r*cols + c] * in[(r + i)*ld + c + j]
template <typename T>
void conv3x3_wgrad(const T* in, std::size_t ld, std::size_t rows, std::size_t cols, const T* dy, T* dw) {
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      T s = 0;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) s += dy[r * cols + c] * in[(r + i) * ld + c + j];
      dw[3 * i + j] += s;
    }
}

inline void stack_accumulate(const float* x, float* sum, float* sq, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    sum[i] += x[i];
    sq[i] += x[i] * x[i];
  }
}

/// out[j] = trace sampled (linear interpolation) at sqrt(t0[j]^2 + slowness2),
/// zero where that time falls outside the record. `inv_dt` = 1/dt.
inline void nmo_sample(const float* trace, std::size_t n_samples, float t_start, float inv_dt,
                       const float* t0, float slowness2, float* out, std::size_t n) {
  const float last = static_cast<float>(n_samples - 1);
  for (std::size_t j = 0; j < n; ++j) {
    const float t = std::sqrt(t0[j] * t0[j] + slowness2);
    const float p = (t - t_start) * inv_dt;
    if (!(p >= 0.0f) || p > last) {
      out[j] = 0.0f;
      continue;
    }
    float i0f = std::floor(p);
    if (i0f > last - 1.0f) i0f = last - 1.0f;
    const auto i0 = static_cast<std::size_t>(i0f);
    const float w = p - i0f;
    out[j] = trace[i0] + w * (trace[i0 + 1] - trace[i0]);
  }
}

}  // namespace velopick::simd::ref

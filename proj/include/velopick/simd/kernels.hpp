// SPDX-License-Identifier: Apache-2.0
//
// Single-precision inner loops, selected once at runtime. The scalar table
// is always available; the AVX2 table is used when the CPU reports AVX2+FMA
// unless VELOPICK_SIMD=scalar is set in the environment.

#pragma once

#include <cstddef>
#include <string_view>

#include "velopick/simd/reference.hpp"

namespace velopick::simd {

struct KernelTable {
  const char* name;
  float (*dot)(const float* a, const float* b, std::size_t n);
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  void (*gemm_nn)(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc);
  void (*gemm_tn)(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc);
  void (*gemm_nt)(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                  const float* B, std::size_t ldb, float* C, std::size_t ldc);
  void (*stack_accumulate)(const float* x, float* sum, float* sq, std::size_t n);
  void (*nmo_sample)(const float* trace, std::size_t n_samples, float t_start, float inv_dt,
                     const float* t0, float slowness2, float* out, std::size_t n);
  void (*conv3x3)(const float* in, std::size_t ld, std::size_t rows, std::size_t cols, const float* w,
                  float* out);
  void (*conv3x3_wgrad)(const float* in, std::size_t ld, std::size_t rows, std::size_t cols,
                        const float* dy, float* dw);
};

const KernelTable& scalar_kernels();
/// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_kernels();
const KernelTable& active_kernels();
/// Overrides the runtime choice ("scalar" or "avx2"); returns false if the
/// requested table is unavailable.
bool select_kernels(std::string_view name);

// Precision-generic entry points used by the autograd layer: float goes
// through the active table, double through the reference kernels.
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                    const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  active_kernels().gemm_nn(M, N, K, A, lda, B, ldb, C, ldc);
}
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
                    const double* B, std::size_t ldb, double* C, std::size_t ldc) {
  ref::gemm_nn(M, N, K, A, lda, B, ldb, C, ldc);
}
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                    const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  active_kernels().gemm_tn(M, N, K, A, lda, B, ldb, C, ldc);
}
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
                    const double* B, std::size_t ldb, double* C, std::size_t ldc) {
  ref::gemm_tn(M, N, K, A, lda, B, ldb, C, ldc);
}
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                    const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  active_kernels().gemm_nt(M, N, K, A, lda, B, ldb, C, ldc);
}
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
                    const double* B, std::size_t ldb, double* C, std::size_t ldc) {
  ref::gemm_nt(M, N, K, A, lda, B, ldb, C, ldc);
}
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  active_kernels().axpy(alpha, x, y, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  ref::axpy(alpha, x, y, n);
}

inline void conv3x3(const float* in, std::size_t ld, std::size_t rows, std::size_t cols, const float* w,
                    float* out) {
  active_kernels().conv3x3(in, ld, rows, cols, w, out);
}
inline void conv3x3(const double* in, std::size_t ld, std::size_t rows, std::size_t cols, const double* w,
                    double* out) {
  ref::conv3x3(in, ld, rows, cols, w, out);
}
inline void conv3x3_wgrad(const float* in, std::size_t ld, std::size_t rows, std::size_t cols,
                          const float* dy, float* dw) {
  active_kernels().conv3x3_wgrad(in, ld, rows, cols, dy, dw);
}
inline void conv3x3_wgrad(const double* in, std::size_t ld, std::size_t rows, std::size_t cols,
                          const double* dy, double* dw) {
  ref::conv3x3_wgrad(in, ld, rows, cols, dy, dw);
}

}  // namespace velopick::simd

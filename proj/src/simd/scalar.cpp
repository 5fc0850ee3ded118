// SPDX-License-Identifier: Apache-2.0

#include "velopick/simd/kernels.hpp"

namespace velopick::simd {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) { return ref::dot(a, b, n); }
void axpy_f32(float alpha, const float* x, float* y, std::size_t n) { ref::axpy(alpha, x, y, n); }

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      "scalar",
      dot_f32,
      axpy_f32,
      ref::gemm_nn<float>,
      ref::gemm_tn<float>,
      ref::gemm_nt<float>,
      ref::stack_accumulate,
      ref::nmo_sample,
      ref::conv3x3<float>,
      ref::conv3x3_wgrad<float>,
  };
  return table;
}

}  // namespace velopick::simd

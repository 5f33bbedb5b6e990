// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. The 4-lane accumulator layout in dot_scalar is the
// contract: SIMD variants must produce bit-identical sums, so the reduction
// tree here (lane0+lane1, lane2+lane3, then the two halves, then the tail)
// is fixed and mirrored by the AVX2 code.

#include "moelab/kernels.hpp"

namespace moelab::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t i = 0;
  const std::size_t n4 = n & ~static_cast<std::size_t>(3);
  for (; i < n4; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc0 + acc1) + (acc2 + acc3)) + tail;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace moelab::kernels::detail

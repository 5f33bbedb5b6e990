// SPDX-License-Identifier: Apache-2.0
//
// AVX2 variants. Compiled with -mavx2 only on x86_64; never called unless
// the running CPU reports AVX2. No FMA: mul+add round separately, matching
// the scalar reference bit-for-bit.

#include "moelab/kernels.hpp"

#if defined(__x86_64__) && defined(MOELAB_HAVE_AVX2)
#include <immintrin.h>

namespace moelab::kernels::detail {

bool avx2_compiled() { return true; }

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n4 = n & ~static_cast<std::size_t>(3);
  for (; i < n4; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                           _mm256_loadu_pd(b + i)));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + tail;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  const std::size_t n4 = n & ~static_cast<std::size_t>(3);
  for (; i < n4; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace moelab::kernels::detail

#else

namespace moelab::kernels::detail {

bool avx2_compiled() { return false; }

double dot_avx2(const double* a, const double* b, std::size_t n) {
  return dot_scalar(a, b, n);
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  axpy_scalar(alpha, x, y, n);
}

}  // namespace moelab::kernels::detail

#endif

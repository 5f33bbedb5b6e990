// SPDX-License-Identifier: Apache-2.0

#include "moelab/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace moelab::kernels {

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using AxpyFn = void (*)(double, const double*, double*, std::size_t);

struct Dispatch {
  DotFn dot;
  AxpyFn axpy;
  std::string name;

  Dispatch() {
    bool use_avx2 = detail::avx2_compiled();
#if defined(__x86_64__)
    use_avx2 = use_avx2 && __builtin_cpu_supports("avx2");
#endif
    if (const char* env = std::getenv("MOELAB_SIMD")) {
      if (std::strcmp(env, "scalar") == 0) use_avx2 = false;
      // "avx2" requested on a CPU without it stays on scalar.
    }
    if (use_avx2) {
      dot = detail::dot_avx2;
      axpy = detail::axpy_avx2;
      name = "avx2";
    } else {
      dot = detail::dot_scalar;
      axpy = detail::axpy_scalar;
      name = "scalar";
    }
  }
};

const Dispatch& dispatch() {
  static const Dispatch d;
  return d;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().axpy(alpha, x, y, n);
}

void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  const DotFn f = dispatch().dot;
  for (std::size_t r = 0; r < rows; ++r) y[r] = f(w + r * cols, x, cols);
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* v, double* y) {
  const AxpyFn f = dispatch().axpy;
  for (std::size_t r = 0; r < rows; ++r) f(v[r], w + r * cols, y, cols);
}

void outer_acc(const double* u, std::size_t rows, const double* v,
               std::size_t cols, double* g) {
  const AxpyFn f = dispatch().axpy;
  for (std::size_t r = 0; r < rows; ++r) f(u[r], v, g + r * cols, cols);
}

const std::string& backend() { return dispatch().name; }

}  // namespace moelab::kernels

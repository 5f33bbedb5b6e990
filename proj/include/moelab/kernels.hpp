// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

// Dense f64 inner-loop kernels. Scalar reference implementations define the
// exact operation order; the AVX2 variants reproduce that order bit-for-bit
// (4 independent lane accumulators, fixed combine order, no FMA), so runtime
// dispatch never changes results.
namespace moelab::kernels {

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

// y[r] = dot(W row r, x); W is rows x cols, row-major.
void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* y);

// y[c] += sum_r v[r] * W[r,c]  (transposed matvec, accumulating)
void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* v, double* y);

// G[r,c] += u[r] * v[c]
void outer_acc(const double* u, std::size_t rows, const double* v,
               std::size_t cols, double* g);

namespace detail {
// Reference (scalar) and AVX2 variants, exposed for equivalence testing.
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
bool avx2_compiled();
}  // namespace detail

// Active backend name: "scalar" or "avx2". Selected once at startup from
// CPU capabilities; the MOELAB_SIMD env var ("scalar"/"avx2") overrides.
const std::string& backend();

}  // namespace moelab::kernels

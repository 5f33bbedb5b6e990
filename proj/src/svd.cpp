// SPDX-License-Identifier: Apache-2.0
//
// One-sided Jacobi SVD: plane rotations orthogonalize the columns of the
// working copy; singular values fall out as column norms. Chosen over
// randomized subspace iteration because expert matrices here are small and
// the full factorization doubles as the truncation-sweep oracle target.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "moelab/common.hpp"
#include "moelab/tensor.hpp"

namespace moelab {

namespace {

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
  return t;
}

// Full one-sided Jacobi on a tall (rows >= cols) matrix.
SvdResult jacobi_svd_tall(const Matrix& w) {
  const std::size_t m = w.rows, n = w.cols;
  Matrix a = w;        // columns get rotated in place
  Matrix v(n, n);      // accumulated right rotations
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  constexpr double kTol = 1e-13;
  constexpr int kMaxSweeps = 100;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += a(i, p) * a(i, p);
          beta += a(i, q) * a(i, q);
          gamma += a(i, p) * a(i, q);
        }
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        converged = false;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = std::copysign(1.0, zeta) /
                   (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged)
    throw numerical_error("truncated_svd: Jacobi sweeps did not converge");

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(sum);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) {
                     return sigma[x] > sigma[y];
                   });

  SvdResult out;
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  out.s.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t src = order[j];
    out.s[j] = sigma[src];
    double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
    for (std::size_t i = 0; i < m; ++i) out.u(i, j) = a(i, src) * inv;
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
  }
  return out;
}

SvdResult truncate(SvdResult full, std::size_t r) {
  SvdResult out;
  out.s.assign(full.s.begin(), full.s.begin() + r);
  out.u = Matrix(full.u.rows, r);
  out.v = Matrix(full.v.rows, r);
  for (std::size_t i = 0; i < full.u.rows; ++i)
    for (std::size_t j = 0; j < r; ++j) out.u(i, j) = full.u(i, j);
  for (std::size_t i = 0; i < full.v.rows; ++i)
    for (std::size_t j = 0; j < r; ++j) out.v(i, j) = full.v(i, j);
  return out;
}

}  // namespace

SvdResult truncated_svd(const Matrix& w, std::size_t r) {
  const std::size_t min_dim = std::min(w.rows, w.cols);
  if (r < 1 || r > min_dim)
    throw std::invalid_argument("truncated_svd: rank out of range");
  if (!w.all_finite())
    throw std::invalid_argument("truncated_svd: non-finite input");

  if (w.rows >= w.cols) return truncate(jacobi_svd_tall(w), r);

  // Wide matrix: factor the transpose and swap the factors.
  SvdResult t = truncate(jacobi_svd_tall(transpose(w)), r);
  SvdResult out;
  out.u = std::move(t.v);
  out.v = std::move(t.u);
  out.s = std::move(t.s);
  return out;
}

}  // namespace moelab

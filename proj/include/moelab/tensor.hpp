// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace moelab {

// Dense row-major f64 matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }

  bool all_finite() const;

  bool operator==(const Matrix& o) const = default;
};

// Discrete probability distribution: non-negative entries summing to 1
// (within 1e-9, checked at construction).
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

// Softmax(logits / temperature), max-stabilized. Throws std::invalid_argument
// on temperature <= 0 or non-finite input.
ProbVector softmax(const std::vector<double>& logits, double temperature);

// Indices of the k largest scores, ties broken toward the lower index,
// returned in ascending index order.
std::vector<std::size_t> top_k(const std::vector<double>& scores,
                               std::size_t k);

// sum_i p_i ln(p_i / q_i), with q floored at 1e-12 and 0*ln(0/q) = 0.
double kl_divergence(const ProbVector& p, const ProbVector& q);

// sum_i |p_i - q_i|
double l1_distance(const std::vector<double>& p, const std::vector<double>& q);

struct SvdResult {
  Matrix u;               // rows x r
  std::vector<double> s;  // length r, descending, non-negative
  Matrix v;               // cols x r
};

// Rank-r truncated SVD via one-sided Jacobi (tolerance 1e-10 on column
// orthogonality). Throws numerical_error on non-convergence.
SvdResult truncated_svd(const Matrix& w, std::size_t r);

// U * diag(s) * V^T
Matrix svd_reconstruct(const SvdResult& svd);

double frobenius_norm_diff(const Matrix& a, const Matrix& b);

}  // namespace moelab

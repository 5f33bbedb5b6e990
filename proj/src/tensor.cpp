// SPDX-License-Identifier: Apache-2.0

#include "moelab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "moelab/common.hpp"

namespace moelab {

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  double sum = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("ProbVector: negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("ProbVector: entries do not sum to 1");
}

ProbVector softmax(const std::vector<double>& logits, double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("softmax: temperature must be positive");
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  for (double v : logits)
    if (!std::isfinite(v))
      throw std::invalid_argument("softmax: non-finite logit");

  double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - max_logit) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbVector(std::move(out));
}

std::vector<std::size_t> top_k(const std::vector<double>& scores,
                               std::size_t k) {
  if (k < 1 || k > scores.size())
    throw std::invalid_argument("top_k: k out of range");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Stable partial sort by descending score; equal scores keep index order,
  // which implements the lowest-index tie-break.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    double qi = std::max(q[i], 1e-12);
    sum += p[i] * std::log(p[i] / qi);
  }
  return sum;
}

double l1_distance(const std::vector<double>& p,
                   const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("l1_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return sum;
}

Matrix svd_reconstruct(const SvdResult& svd) {
  const std::size_t rows = svd.u.rows, cols = svd.v.rows, r = svd.s.size();
  Matrix out(rows, cols);
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i = 0; i < rows; ++i) {
      double c = svd.u(i, j) * svd.s[j];
      for (std::size_t l = 0; l < cols; ++l) out(i, l) += c * svd.v(l, j);
    }
  return out;
}

double frobenius_norm_diff(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument("frobenius_norm_diff: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace moelab

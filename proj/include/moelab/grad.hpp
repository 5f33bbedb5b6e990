// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "moelab/model.hpp"

namespace moelab {

// Canonical tensor naming shared by checkpoints, gradients and optimizers:
// "embedding", "output_head", "layers.<l>.router",
// "layers.<l>.experts.<i>.w_in" / ".w_out".
std::vector<std::pair<std::string, Matrix*>> named_tensors(MoEModel& model);
std::vector<std::pair<std::string, const Matrix*>> named_tensors(
    const MoEModel& model);

// Parameter gradients, same shapes as the model.
struct GradStore {
  Matrix embedding;
  Matrix output_head;
  struct LayerGrads {
    Matrix router;
    std::vector<ExpertWeights> experts;
  };
  std::vector<LayerGrads> layers;

  static GradStore zeros_like(const MoEModel& model);
  void accumulate(const GradStore& other, double scale = 1.0);
  void scale(double factor);
  double max_abs() const;
  std::vector<std::pair<std::string, Matrix*>> named();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
  const Matrix* find(const std::string& name) const;
};

// Forward intermediates for one sequence, enough to run backward.
struct SeqCache {
  // hidden[t][l] = input to layer l at position t; hidden[t][n_layers] = h_L
  std::vector<std::vector<std::vector<double>>> hidden;
  std::vector<std::vector<MoeLayerDetail>> details;  // [pos][layer]
  Matrix logits;                                     // seq_len x vocab
};

SeqCache forward_cached(const MoEModel& model, const Sequence& seq);

// Reverse-mode pass from d(loss)/d(logits). Top-k selection is
// straight-through: the selected set is a constant, gradients flow through
// the renormalized gate weights of the selected experts.
void backward_sequence(const MoEModel& model, const Sequence& seq,
                       const SeqCache& cache, const Matrix& dlogits,
                       GradStore& grads);

// Masked next-token cross-entropy over one sequence.
// loss = (1/N) sum_t m[t+1] * (-log softmax(z_t)[tokens[t+1]]), N = sum m + eps
struct LossGrad {
  double loss = 0.0;
  Matrix dlogits;
};
LossGrad cross_entropy_next_token(const Matrix& logits, const Sequence& seq,
                                  double epsilon = 1e-8);

// Adam over an arbitrary named parameter subset.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<std::pair<std::string, Matrix*>> params,
            const GradStore& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

class SgdOptimizer {
 public:
  explicit SgdOptimizer(double lr) : lr_(lr) {}
  void step(std::vector<std::pair<std::string, Matrix*>> params,
            const GradStore& grads);

 private:
  double lr_;
};

}  // namespace moelab

// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include "moelab/common.hpp"
#include "moelab/grad.hpp"
#include "moelab/model.hpp"
#include "moelab/threading.hpp"

namespace moelab {

TeacherTrainResult train_teacher(const MoEModel& model, const TokenBatch& corpus,
                                 std::size_t steps, double lr,
                                 std::size_t batch_size) {
  if (corpus.empty())
    throw std::invalid_argument("train_teacher: empty corpus");
  if (batch_size < 1)
    throw std::invalid_argument("train_teacher: batch_size must be >= 1");

  TeacherTrainResult result;
  result.model = model;
  AdamOptimizer opt(lr);

  struct SeqResult {
    double loss;
    GradStore grads;
  };

  std::size_t cursor = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<std::size_t> batch_idx(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
      batch_idx[b] = cursor;
      cursor = (cursor + 1) % corpus.size();
    }

    auto per_seq = parallel_map<SeqResult>(batch_size, [&](std::size_t b) {
      const Sequence& seq = corpus[batch_idx[b]];
      SeqCache cache = forward_cached(result.model, seq);
      LossGrad lg = cross_entropy_next_token(cache.logits, seq);
      GradStore grads = GradStore::zeros_like(result.model);
      backward_sequence(result.model, seq, cache, lg.dlogits, grads);
      return SeqResult{lg.loss, std::move(grads)};
    });

    GradStore total = GradStore::zeros_like(result.model);
    double loss = 0.0;
    for (const SeqResult& r : per_seq) {
      loss += r.loss;
      total.accumulate(r.grads);
    }
    loss /= static_cast<double>(batch_size);
    total.scale(1.0 / static_cast<double>(batch_size));

    if (!std::isfinite(loss))
      throw numerical_error("train_teacher: loss diverged at step " +
                            std::to_string(step));

    opt.step(named_tensors(result.model), total);
    result.loss_history.push_back(loss);
  }
  return result;
}

}  // namespace moelab

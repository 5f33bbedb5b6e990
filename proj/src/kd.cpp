// SPDX-License-Identifier: Apache-2.0

#include "moelab/kd.hpp"

#include <cmath>
#include <stdexcept>

#include "moelab/common.hpp"
#include "moelab/kernels.hpp"
#include "moelab/threading.hpp"

namespace moelab {

void KDConfig::validate() const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("KDConfig: temperature > 0 required");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("KDConfig: learning_rate > 0 required");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("KDConfig: epsilon > 0 required");
  if (batch_size < 1 || grad_accum < 1 || max_seq_len < 2)
    throw std::invalid_argument("KDConfig: degenerate batching parameters");
  if (optimizer != "adam" && optimizer != "sgd")
    throw std::invalid_argument("KDConfig: optimizer must be adam or sgd");
}

namespace {

std::vector<double> logits_row(const Matrix& m, std::size_t t) {
  return {m.row(t), m.row(t) + m.cols};
}

}  // namespace

double kd_loss(const Matrix& teacher_logits, const Matrix& student_logits,
               const std::vector<std::uint8_t>& mask, double temperature,
               double epsilon) {
  return kd_loss_grad(teacher_logits, student_logits, mask, temperature,
                      epsilon)
      .loss;
}

LossGrad kd_loss_grad(const Matrix& teacher_logits,
                      const Matrix& student_logits,
                      const std::vector<std::uint8_t>& mask,
                      double temperature, double epsilon) {
  if (teacher_logits.rows != student_logits.rows ||
      teacher_logits.cols != student_logits.cols ||
      mask.size() != teacher_logits.rows)
    throw std::invalid_argument("kd_loss: shape mismatch");
  const std::size_t len = teacher_logits.rows;

  LossGrad out;
  out.dlogits = Matrix(student_logits.rows, student_logits.cols);
  if (len < 2) return out;

  double n = epsilon;
  for (std::size_t t = 0; t + 1 < len; ++t) n += mask[t + 1];
  const double tau = temperature;
  const double loss_scale = tau * tau / n;
  const double grad_scale = tau / n;

  for (std::size_t t = 0; t + 1 < len; ++t) {
    if (!mask[t + 1]) continue;
    ProbVector pt = softmax(logits_row(teacher_logits, t), tau);
    ProbVector ps = softmax(logits_row(student_logits, t), tau);
    out.loss += loss_scale * kl_divergence(pt, ps);
    for (std::size_t v = 0; v < student_logits.cols; ++v)
      out.dlogits(t, v) = grad_scale * (ps[v] - pt[v]);
  }
  return out;
}

RouterGradFormula router_grad_formula(const ProbVector& g_teacher,
                                      const ProbVector& g_student,
                                      const std::vector<double>& x,
                                      double temperature) {
  if (g_teacher.size() != g_student.size())
    throw std::invalid_argument("router_grad_formula: length mismatch");
  RouterGradFormula out;
  out.per_logit.resize(g_student.size());
  for (std::size_t e = 0; e < g_student.size(); ++e)
    out.per_logit[e] = (g_student[e] - g_teacher[e]) / temperature;
  out.outer = Matrix(g_student.size(), x.size());
  for (std::size_t e = 0; e < g_student.size(); ++e)
    for (std::size_t z = 0; z < x.size(); ++z)
      out.outer(e, z) = out.per_logit[e] * x[z];
  return out;
}

CalibrationResult calibrate_router(const MoEModel& teacher,
                                   const MoEModel& student,
                                   const TokenBatch& corpus,
                                   const KDConfig& config) {
  config.validate();
  if (teacher.config.vocab_size != student.config.vocab_size)
    throw std::invalid_argument("calibrate_router: vocabulary mismatch");
  if (teacher.config.d_model != student.config.d_model)
    throw std::invalid_argument("calibrate_router: d_model mismatch");

  // Truncate to max_seq_len, cap the sample count.
  TokenBatch samples;
  for (const Sequence& seq : corpus) {
    if (samples.size() >= config.max_samples) break;
    Sequence s = seq;
    if (s.tokens.size() > config.max_seq_len) {
      s.tokens.resize(config.max_seq_len);
      s.mask.resize(config.max_seq_len);
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty())
    throw std::invalid_argument("calibrate_router: empty corpus");

  CalibrationResult result;
  result.student = student;

  // Optimizer state covers the router matrices and nothing else.
  auto router_params = [&] {
    std::vector<std::pair<std::string, Matrix*>> params;
    for (auto& [name, m] : named_tensors(result.student))
      if (name.ends_with(".router")) params.emplace_back(name, m);
    return params;
  };
  AdamOptimizer adam(config.learning_rate);
  SgdOptimizer sgd(config.learning_rate);

  struct SeqResult {
    double loss;
    GradStore grads;
  };

  const std::size_t window = config.batch_size * config.grad_accum;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t start = 0; start < samples.size(); start += window) {
      const std::size_t count = std::min(window, samples.size() - start);

      auto per_seq = parallel_map<SeqResult>(count, [&](std::size_t b) {
        const Sequence& seq = samples[start + b];
        Matrix t_logits = forward(teacher, {seq}).logits[0];
        SeqCache cache = forward_cached(result.student, seq);
        LossGrad lg = kd_loss_grad(t_logits, cache.logits, seq.mask,
                                   config.temperature, config.epsilon);
        GradStore grads = GradStore::zeros_like(result.student);
        backward_sequence(result.student, seq, cache, lg.dlogits, grads);
        return SeqResult{lg.loss, std::move(grads)};
      });

      GradStore total = GradStore::zeros_like(result.student);
      double loss = 0.0;
      for (const SeqResult& r : per_seq) {
        loss += r.loss;
        total.accumulate(r.grads);
      }
      loss /= static_cast<double>(count);
      total.scale(1.0 / static_cast<double>(count));

      if (!std::isfinite(loss))
        throw numerical_error("calibrate_router: NaN loss at step " +
                              std::to_string(step));

      if (config.optimizer == "adam")
        adam.step(router_params(), total);
      else
        sgd.step(router_params(), total);

      ++step;
      result.history.push_back({step, loss, config.learning_rate});
    }
  }
  return result;
}

double count_router_fraction(const MoEModel& model) {
  double router = 0.0, total = 0.0;
  if (model.layers.empty())
    throw std::invalid_argument("count_router_fraction: model has no layers");
  for (const MoELayer& l : model.layers)
    if (l.experts.empty())
      throw std::invalid_argument(
          "count_router_fraction: layer without experts");
  for (auto& [name, m] : named_tensors(model)) {
    total += static_cast<double>(m->data.size());
    if (name.ends_with(".router")) router += static_cast<double>(m->data.size());
  }
  return router / total;
}

double evaluate_kd_loss(const MoEModel& teacher, const MoEModel& student,
                        const TokenBatch& corpus, double temperature,
                        double epsilon) {
  if (corpus.empty())
    throw std::invalid_argument("evaluate_kd_loss: empty corpus");
  auto losses = parallel_map<double>(corpus.size(), [&](std::size_t i) {
    Matrix t_logits = forward(teacher, {corpus[i]}).logits[0];
    Matrix s_logits = forward(student, {corpus[i]}).logits[0];
    return kd_loss(t_logits, s_logits, corpus[i].mask, temperature, epsilon);
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

}  // namespace moelab

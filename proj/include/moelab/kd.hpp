// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "moelab/grad.hpp"
#include "moelab/model.hpp"

namespace moelab {

struct KDConfig {
  double temperature = 1.0;
  double learning_rate = 5e-5;
  std::size_t epochs = 1;
  std::size_t batch_size = 2;
  std::size_t grad_accum = 4;
  std::size_t max_seq_len = 512;
  std::size_t max_samples = 3000;
  double epsilon = 1e-8;
  std::string optimizer = "adam";  // or "sgd"

  void validate() const;
};

// Masked, temperature-scaled token-level KL from teacher to student:
// loss = (tau^2 / N_x) * sum_t m[t+1] * KL(softmax(z_T/tau) || softmax(z_S/tau))
// with N_x = sum_t m[t+1] + eps.
double kd_loss(const Matrix& teacher_logits, const Matrix& student_logits,
               const std::vector<std::uint8_t>& mask, double temperature,
               double epsilon);

// Same loss plus d(loss)/d(student logits).
LossGrad kd_loss_grad(const Matrix& teacher_logits,
                      const Matrix& student_logits,
                      const std::vector<std::uint8_t>& mask,
                      double temperature, double epsilon);

// Closed-form router-gradient diagnostic: (g_S - g_T)/tau per logit and its
// outer product with x. Reference only; training uses the full reverse-mode
// path.
struct RouterGradFormula {
  std::vector<double> per_logit;  // (g_S - g_T)/tau
  Matrix outer;                   // per_logit x^T
};
RouterGradFormula router_grad_formula(const ProbVector& g_teacher,
                                      const ProbVector& g_student,
                                      const std::vector<double>& x,
                                      double temperature);

struct CalibrationStep {
  std::size_t step = 0;
  double kd_loss = 0.0;
  double lr = 0.0;
};

struct CalibrationResult {
  MoEModel student;
  std::vector<CalibrationStep> history;
};

// Router-only distillation: full forward/backward through the student, but
// optimizer updates touch router matrices exclusively; every other tensor
// stays bit-identical.
CalibrationResult calibrate_router(const MoEModel& teacher,
                                   const MoEModel& student,
                                   const TokenBatch& corpus,
                                   const KDConfig& config);

// (router parameters) / (all parameters)
double count_router_fraction(const MoEModel& model);

// Mean kd_loss over a corpus with no updates (held-out evaluation).
double evaluate_kd_loss(const MoEModel& teacher, const MoEModel& student,
                        const TokenBatch& corpus, double temperature = 1.0,
                        double epsilon = 1e-8);

}  // namespace moelab

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moelab/tensor.hpp"

namespace moelab {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t n_layers = 0;
  std::size_t n_experts = 0;
  std::size_t top_k = 0;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument unless all dims >= 1 and 1 <= k < E.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ExpertWeights {
  Matrix w_in;   // d_ff x d_model
  Matrix w_out;  // d_model x d_ff

  bool operator==(const ExpertWeights&) const = default;
};

struct MoELayer {
  Matrix router;  // current_experts x d_model
  std::vector<ExpertWeights> experts;
  std::size_t top_k = 0;  // k_merge for merged students, else config.top_k

  std::size_t n_experts() const { return experts.size(); }
  bool operator==(const MoELayer&) const = default;
};

// Stacked MoE-FFN blocks with residual connections; no attention.
struct MoEModel {
  ModelConfig config;
  Matrix embedding;    // vocab x d_model
  std::vector<MoELayer> layers;
  Matrix output_head;  // vocab x d_model

  bool operator==(const MoEModel&) const = default;
};

struct Sequence {
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint8_t> mask;  // 1 = real token, 0 = padding
};

using TokenBatch = std::vector<Sequence>;

// Per (layer, token) routing record.
struct LayerTokenTrace {
  std::vector<double> scores;         // post-softmax gate probs, full width
  std::vector<std::size_t> selected;  // ascending expert indices, size k
  std::vector<double> weights;        // renormalized over selected, sums to 1
  std::vector<double> input;          // layer input x (when record_io)
  std::vector<double> moe_output;     // MoE sum before the residual add
};

// entries[seq][layer][pos]
struct RoutingTrace {
  std::vector<std::vector<std::vector<LayerTokenTrace>>> entries;
};

struct ForwardOptions {
  bool record_io = false;
};

struct ForwardResult {
  std::vector<Matrix> logits;  // per sequence: seq_len x vocab
  RoutingTrace trace;
};

// o = W_out * silu(W_in * x)
std::vector<double> expert_forward(const ExpertWeights& e,
                                   const std::vector<double>& x);

// Everything the backward pass needs from one layer application.
struct MoeLayerDetail {
  std::vector<double> gate_logits;
  std::vector<double> gate_probs;
  std::vector<std::size_t> selected;
  std::vector<double> weights;
  std::vector<std::vector<double>> expert_pre;  // per selected expert, d_ff
  std::vector<std::vector<double>> expert_act;
  std::vector<std::vector<double>> expert_out;  // per selected expert, d_model
  std::vector<double> moe_out;
};

// y = x + sum_{i in S} g~_i E_i(x). Returns y; fills detail when non-null.
std::vector<double> moe_layer_forward_detail(const MoELayer& layer,
                                             const std::vector<double>& x,
                                             MoeLayerDetail* detail);

// Public single-layer entry point: output plus the trace record.
std::pair<std::vector<double>, LayerTokenTrace> moe_layer_forward(
    const MoELayer& layer, const std::vector<double>& x,
    bool record_io = false);

MoEModel init_model(const ModelConfig& config);

ForwardResult forward(const MoEModel& model, const TokenBatch& batch,
                      const ForwardOptions& options = {});

struct TeacherTrainResult {
  MoEModel model;
  std::vector<double> loss_history;  // mean CE per step
};

// Full-parameter next-token cross-entropy training (Adam).
TeacherTrainResult train_teacher(const MoEModel& model, const TokenBatch& corpus,
                                 std::size_t steps, double lr,
                                 std::size_t batch_size = 8);

void save_checkpoint(const MoEModel& model, const std::string& path);
MoEModel load_checkpoint(const std::string& path);

}  // namespace moelab

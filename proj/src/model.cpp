// SPDX-License-Identifier: Apache-2.0

#include "moelab/model.hpp"

#include <cmath>
#include <stdexcept>

#include "moelab/common.hpp"
#include "moelab/kernels.hpp"

namespace moelab {

void ModelConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || d_ff < 1 || n_layers < 1 ||
      n_experts < 1)
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  if (top_k < 1 || top_k >= n_experts)
    throw std::invalid_argument("ModelConfig: requires 1 <= k < E");
}

namespace {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

void fill_uniform(Matrix& m, std::size_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : m.data) v = rng.uniform(-bound, bound);
}

}  // namespace

std::vector<double> expert_forward(const ExpertWeights& e,
                                   const std::vector<double>& x) {
  if (x.size() != e.w_in.cols)
    throw std::invalid_argument("expert_forward: dimension mismatch");
  std::vector<double> h(e.w_in.rows);
  kernels::matvec(e.w_in.data.data(), e.w_in.rows, e.w_in.cols, x.data(),
                  h.data());
  for (double& v : h) v = silu(v);
  std::vector<double> out(e.w_out.rows);
  kernels::matvec(e.w_out.data.data(), e.w_out.rows, e.w_out.cols, h.data(),
                  out.data());
  return out;
}

std::vector<double> moe_layer_forward_detail(const MoELayer& layer,
                                             const std::vector<double>& x,
                                             MoeLayerDetail* detail) {
  const std::size_t n_exp = layer.n_experts();
  if (n_exp == 0 || layer.router.rows != n_exp)
    throw std::invalid_argument("moe_layer_forward: router/expert mismatch");
  if (x.size() != layer.router.cols)
    throw std::invalid_argument("moe_layer_forward: dimension mismatch");
  const std::size_t k = std::min(layer.top_k, n_exp);
  if (k == 0) throw std::invalid_argument("moe_layer_forward: top_k == 0");

  std::vector<double> logits(n_exp);
  kernels::matvec(layer.router.data.data(), n_exp, layer.router.cols, x.data(),
                  logits.data());
  ProbVector g = softmax(logits, 1.0);
  std::vector<std::size_t> selected = top_k(g.values(), k);

  double denom = 0.0;
  for (std::size_t i : selected) denom += g[i];
  std::vector<double> weights(k);
  for (std::size_t j = 0; j < k; ++j) weights[j] = g[selected[j]] / denom;

  std::vector<double> moe(x.size(), 0.0);
  std::vector<std::vector<double>> pre(k), act(k), out(k);
  for (std::size_t j = 0; j < k; ++j) {
    const ExpertWeights& e = layer.experts[selected[j]];
    std::vector<double> h(e.w_in.rows);
    kernels::matvec(e.w_in.data.data(), e.w_in.rows, e.w_in.cols, x.data(),
                    h.data());
    std::vector<double> a(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) a[i] = silu(h[i]);
    std::vector<double> o(e.w_out.rows);
    kernels::matvec(e.w_out.data.data(), e.w_out.rows, e.w_out.cols, a.data(),
                    o.data());
    kernels::axpy(weights[j], o.data(), moe.data(), moe.size());
    if (detail) {
      pre[j] = std::move(h);
      act[j] = std::move(a);
      out[j] = std::move(o);
    }
  }

  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + moe[i];

  if (detail) {
    detail->gate_logits = std::move(logits);
    detail->gate_probs = g.values();
    detail->selected = std::move(selected);
    detail->weights = std::move(weights);
    detail->expert_pre = std::move(pre);
    detail->expert_act = std::move(act);
    detail->expert_out = std::move(out);
    detail->moe_out = std::move(moe);
  }
  return y;
}

std::pair<std::vector<double>, LayerTokenTrace> moe_layer_forward(
    const MoELayer& layer, const std::vector<double>& x, bool record_io) {
  MoeLayerDetail detail;
  std::vector<double> y = moe_layer_forward_detail(layer, x, &detail);
  LayerTokenTrace trace;
  trace.scores = std::move(detail.gate_probs);
  trace.selected = std::move(detail.selected);
  trace.weights = std::move(detail.weights);
  if (record_io) {
    trace.input = x;
    trace.moe_output = std::move(detail.moe_out);
  }
  return {std::move(y), std::move(trace)};
}

MoEModel init_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  MoEModel model;
  model.config = config;
  model.embedding = Matrix(config.vocab_size, config.d_model);
  fill_uniform(model.embedding, config.d_model, rng);
  model.layers.resize(config.n_layers);
  for (MoELayer& layer : model.layers) {
    layer.top_k = config.top_k;
    layer.router = Matrix(config.n_experts, config.d_model);
    fill_uniform(layer.router, config.d_model, rng);
    layer.experts.resize(config.n_experts);
    for (ExpertWeights& e : layer.experts) {
      e.w_in = Matrix(config.d_ff, config.d_model);
      fill_uniform(e.w_in, config.d_model, rng);
      e.w_out = Matrix(config.d_model, config.d_ff);
      fill_uniform(e.w_out, config.d_ff, rng);
    }
  }
  model.output_head = Matrix(config.vocab_size, config.d_model);
  fill_uniform(model.output_head, config.d_model, rng);
  return model;
}

ForwardResult forward(const MoEModel& model, const TokenBatch& batch,
                      const ForwardOptions& options) {
  ForwardResult result;
  result.logits.reserve(batch.size());
  result.trace.entries.resize(batch.size());

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Sequence& seq = batch[s];
    if (seq.mask.size() != seq.tokens.size())
      throw std::invalid_argument("forward: mask length mismatch");
    auto& seq_trace = result.trace.entries[s];
    seq_trace.resize(model.layers.size());
    Matrix logits(seq.tokens.size(), model.config.vocab_size);

    for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
      if (seq.tokens[t] >= model.config.vocab_size)
        throw std::invalid_argument("forward: token id out of range");
      std::vector<double> h(model.embedding.row(seq.tokens[t]),
                            model.embedding.row(seq.tokens[t]) +
                                model.config.d_model);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto [y, trace] =
            moe_layer_forward(model.layers[l], h, options.record_io);
        seq_trace[l].push_back(std::move(trace));
        h = std::move(y);
      }
      kernels::matvec(model.output_head.data.data(), model.output_head.rows,
                      model.output_head.cols, h.data(), logits.row(t));
    }
    result.logits.push_back(std::move(logits));
  }
  return result;
}

}  // namespace moelab

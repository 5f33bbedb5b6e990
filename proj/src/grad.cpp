// SPDX-License-Identifier: Apache-2.0

#include "moelab/grad.hpp"

#include <cmath>
#include <stdexcept>

#include "moelab/kernels.hpp"

namespace moelab {

namespace {

double silu_grad(double x) {
  double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> named_tensors(MoEModel& model) {
  std::vector<std::pair<std::string, Matrix*>> out;
  out.emplace_back("embedding", &model.embedding);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    std::string prefix = "layers." + std::to_string(l) + ".";
    out.emplace_back(prefix + "router", &model.layers[l].router);
    for (std::size_t i = 0; i < model.layers[l].experts.size(); ++i) {
      std::string e = prefix + "experts." + std::to_string(i) + ".";
      out.emplace_back(e + "w_in", &model.layers[l].experts[i].w_in);
      out.emplace_back(e + "w_out", &model.layers[l].experts[i].w_out);
    }
  }
  out.emplace_back("output_head", &model.output_head);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(
    const MoEModel& model) {
  auto mut = named_tensors(const_cast<MoEModel&>(model));
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mut.size());
  for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
  return out;
}

GradStore GradStore::zeros_like(const MoEModel& model) {
  GradStore g;
  g.embedding = Matrix(model.embedding.rows, model.embedding.cols);
  g.output_head = Matrix(model.output_head.rows, model.output_head.cols);
  g.layers.resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoELayer& layer = model.layers[l];
    g.layers[l].router = Matrix(layer.router.rows, layer.router.cols);
    g.layers[l].experts.resize(layer.experts.size());
    for (std::size_t i = 0; i < layer.experts.size(); ++i) {
      g.layers[l].experts[i].w_in =
          Matrix(layer.experts[i].w_in.rows, layer.experts[i].w_in.cols);
      g.layers[l].experts[i].w_out =
          Matrix(layer.experts[i].w_out.rows, layer.experts[i].w_out.cols);
    }
  }
  return g;
}

std::vector<std::pair<std::string, Matrix*>> GradStore::named() {
  std::vector<std::pair<std::string, Matrix*>> out;
  out.emplace_back("embedding", &embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::string prefix = "layers." + std::to_string(l) + ".";
    out.emplace_back(prefix + "router", &layers[l].router);
    for (std::size_t i = 0; i < layers[l].experts.size(); ++i) {
      std::string e = prefix + "experts." + std::to_string(i) + ".";
      out.emplace_back(e + "w_in", &layers[l].experts[i].w_in);
      out.emplace_back(e + "w_out", &layers[l].experts[i].w_out);
    }
  }
  out.emplace_back("output_head", &output_head);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> GradStore::named() const {
  auto mut = const_cast<GradStore*>(this)->named();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mut.size());
  for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
  return out;
}

const Matrix* GradStore::find(const std::string& name) const {
  for (auto& [n, ptr] : named())
    if (n == name) return ptr;
  return nullptr;
}

void GradStore::accumulate(const GradStore& other, double scale) {
  auto dst = named();
  auto src = other.named();
  if (dst.size() != src.size())
    throw std::invalid_argument("GradStore::accumulate: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i)
    kernels::axpy(scale, src[i].second->data.data(),
                  dst[i].second->data.data(), dst[i].second->data.size());
}

void GradStore::scale(double factor) {
  for (auto& [name, m] : named())
    for (double& v : m->data) v *= factor;
}

double GradStore::max_abs() const {
  double mx = 0.0;
  for (auto& [name, m] : named())
    for (double v : m->data) mx = std::max(mx, std::abs(v));
  return mx;
}

SeqCache forward_cached(const MoEModel& model, const Sequence& seq) {
  SeqCache cache;
  const std::size_t len = seq.tokens.size();
  const std::size_t n_layers = model.layers.size();
  cache.hidden.resize(len);
  cache.details.resize(len);
  cache.logits = Matrix(len, model.config.vocab_size);

  for (std::size_t t = 0; t < len; ++t) {
    if (seq.tokens[t] >= model.config.vocab_size)
      throw std::invalid_argument("forward_cached: token id out of range");
    cache.hidden[t].resize(n_layers + 1);
    cache.details[t].resize(n_layers);
    cache.hidden[t][0].assign(
        model.embedding.row(seq.tokens[t]),
        model.embedding.row(seq.tokens[t]) + model.config.d_model);
    for (std::size_t l = 0; l < n_layers; ++l) {
      cache.hidden[t][l + 1] = moe_layer_forward_detail(
          model.layers[l], cache.hidden[t][l], &cache.details[t][l]);
    }
    kernels::matvec(model.output_head.data.data(), model.output_head.rows,
                    model.output_head.cols, cache.hidden[t][n_layers].data(),
                    cache.logits.row(t));
  }
  return cache;
}

void backward_sequence(const MoEModel& model, const Sequence& seq,
                       const SeqCache& cache, const Matrix& dlogits,
                       GradStore& grads) {
  const std::size_t len = seq.tokens.size();
  const std::size_t n_layers = model.layers.size();
  const std::size_t d_model = model.config.d_model;
  if (dlogits.rows != len || dlogits.cols != model.config.vocab_size)
    throw std::invalid_argument("backward_sequence: dlogits shape mismatch");

  for (std::size_t t = 0; t < len; ++t) {
    // Output head.
    std::vector<double> dh(d_model, 0.0);
    kernels::outer_acc(dlogits.row(t), model.output_head.rows,
                       cache.hidden[t][n_layers].data(), d_model,
                       grads.output_head.data.data());
    kernels::matvec_t_acc(model.output_head.data.data(),
                          model.output_head.rows, d_model, dlogits.row(t),
                          dh.data());

    for (std::size_t l = n_layers; l-- > 0;) {
      const MoELayer& layer = model.layers[l];
      const MoeLayerDetail& det = cache.details[t][l];
      const std::vector<double>& x = cache.hidden[t][l];
      const std::size_t n_exp = layer.n_experts();
      const std::size_t k = det.selected.size();

      // Residual: dx starts as a copy of dy; dmoe aliases dy.
      std::vector<double> dx(dh);
      const std::vector<double>& dmoe = dh;

      std::vector<double> d_weights(k, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = det.selected[j];
        const ExpertWeights& e = layer.experts[i];
        ExpertWeights& eg = grads.layers[l].experts[i];
        const std::vector<double>& o = det.expert_out[j];

        d_weights[j] = kernels::dot(dmoe.data(), o.data(), d_model);

        // do = g~_j * dmoe
        std::vector<double> dout(d_model);
        for (std::size_t z = 0; z < d_model; ++z)
          dout[z] = det.weights[j] * dmoe[z];

        kernels::outer_acc(dout.data(), e.w_out.rows,
                           det.expert_act[j].data(), e.w_out.cols,
                           eg.w_out.data.data());
        std::vector<double> da(e.w_out.cols, 0.0);
        kernels::matvec_t_acc(e.w_out.data.data(), e.w_out.rows, e.w_out.cols,
                              dout.data(), da.data());
        for (std::size_t z = 0; z < da.size(); ++z)
          da[z] *= silu_grad(det.expert_pre[j][z]);
        kernels::outer_acc(da.data(), e.w_in.rows, x.data(), e.w_in.cols,
                           eg.w_in.data.data());
        kernels::matvec_t_acc(e.w_in.data.data(), e.w_in.rows, e.w_in.cols,
                              da.data(), dx.data());
      }

      // Renormalization: g~_j = g_i / denom over the selected set.
      double denom = 0.0;
      for (std::size_t i : det.selected) denom += det.gate_probs[i];
      double weighted = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        weighted += d_weights[j] * det.weights[j];
      std::vector<double> dg(n_exp, 0.0);
      for (std::size_t j = 0; j < k; ++j)
        dg[det.selected[j]] = (d_weights[j] - weighted) / denom;

      // Softmax.
      double gdot = 0.0;
      for (std::size_t e = 0; e < n_exp; ++e) gdot += dg[e] * det.gate_probs[e];
      std::vector<double> dlogit(n_exp);
      for (std::size_t e = 0; e < n_exp; ++e)
        dlogit[e] = det.gate_probs[e] * (dg[e] - gdot);

      kernels::outer_acc(dlogit.data(), n_exp, x.data(), d_model,
                         grads.layers[l].router.data.data());
      kernels::matvec_t_acc(layer.router.data.data(), n_exp, d_model,
                            dlogit.data(), dx.data());
      dh = std::move(dx);
    }
    kernels::axpy(1.0, dh.data(), grads.embedding.row(seq.tokens[t]), d_model);
  }
}

LossGrad cross_entropy_next_token(const Matrix& logits, const Sequence& seq,
                                  double epsilon) {
  const std::size_t len = seq.tokens.size();
  LossGrad out;
  out.dlogits = Matrix(logits.rows, logits.cols);
  if (len < 2) return out;

  double n = epsilon;
  for (std::size_t t = 0; t + 1 < len; ++t) n += seq.mask[t + 1];

  for (std::size_t t = 0; t + 1 < len; ++t) {
    if (!seq.mask[t + 1]) continue;
    std::vector<double> row(logits.row(t), logits.row(t) + logits.cols);
    ProbVector p = softmax(row, 1.0);
    std::uint32_t target = seq.tokens[t + 1];
    out.loss += -std::log(std::max(p[target], 1e-300)) / n;
    for (std::size_t v = 0; v < logits.cols; ++v)
      out.dlogits(t, v) = (p[v] - (v == target ? 1.0 : 0.0)) / n;
  }
  return out;
}

void AdamOptimizer::step(std::vector<std::pair<std::string, Matrix*>> params,
                         const GradStore& grads) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, param] : params) {
    const Matrix* g = grads.find(name);
    if (!g) throw std::invalid_argument("Adam: no gradient for " + name);
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_
               .emplace(name, std::make_pair(Matrix(param->rows, param->cols),
                                             Matrix(param->rows, param->cols)))
               .first;
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    for (std::size_t i = 0; i < param->data.size(); ++i) {
      double gi = g->data[i];
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      param->data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void SgdOptimizer::step(std::vector<std::pair<std::string, Matrix*>> params,
                        const GradStore& grads) {
  for (auto& [name, param] : params) {
    const Matrix* g = grads.find(name);
    if (!g) throw std::invalid_argument("SGD: no gradient for " + name);
    kernels::axpy(-lr_, g->data.data(), param->data.data(),
                  param->data.size());
  }
}

}  // namespace moelab

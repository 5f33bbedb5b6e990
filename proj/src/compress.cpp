// SPDX-License-Identifier: Apache-2.0

#include "moelab/compress.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "moelab/common.hpp"
#include "moelab/kernels.hpp"

namespace moelab {

std::string to_string(CompressionMethod method) {
  switch (method) {
    case CompressionMethod::prune: return "prune";
    case CompressionMethod::edit: return "edit";
    case CompressionMethod::merge: return "merge";
  }
  return "?";
}

CompressionMethod compression_method_from_string(const std::string& s) {
  if (s == "prune") return CompressionMethod::prune;
  if (s == "edit") return CompressionMethod::edit;
  if (s == "merge") return CompressionMethod::merge;
  throw std::invalid_argument("unknown compression method: " + s);
}

void save_compression_map(const CompressionMap& map, const std::string& path) {
  nlohmann::json j;
  j["method"] = to_string(map.method);
  nlohmann::json layers = nlohmann::json::array();
  if (map.method == CompressionMethod::prune) {
    for (const auto& l : std::get<PruneMap>(map.map).layers)
      layers.push_back({{"retained", l.retained}});
  } else if (map.method == CompressionMethod::edit) {
    for (const auto& l : std::get<EditMap>(map.map).layers) {
      nlohmann::json experts = nlohmann::json::array();
      for (const auto& e : l)
        experts.push_back({{"rank", e.rank},
                           {"err_w_in", e.err_w_in},
                           {"err_w_out", e.err_w_out}});
      layers.push_back({{"experts", experts}});
    }
  } else {
    for (const auto& l : std::get<MergeMap>(map.map).layers)
      layers.push_back({{"phi", l.phi}, {"k_merge", l.k_merge}});
  }
  j["layers"] = layers;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << j.dump(2) << "\n";
}

CompressionMap load_compression_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw format_error("invalid compression map JSON");

  CompressionMap out;
  try {
    out.method = compression_method_from_string(j.at("method"));
    if (out.method == CompressionMethod::prune) {
      PruneMap m;
      for (const auto& l : j.at("layers"))
        m.layers.push_back(
            {l.at("retained").get<std::vector<std::size_t>>()});
      out.map = std::move(m);
    } else if (out.method == CompressionMethod::edit) {
      EditMap m;
      for (const auto& l : j.at("layers")) {
        std::vector<EditMap::ExpertEdit> experts;
        for (const auto& e : l.at("experts"))
          experts.push_back({e.at("rank").get<std::size_t>(),
                             e.at("err_w_in").get<double>(),
                             e.at("err_w_out").get<double>()});
        m.layers.push_back(std::move(experts));
      }
      out.map = std::move(m);
    } else {
      MergeMap m;
      for (const auto& l : j.at("layers")) {
        MergeMap::Layer layer;
        layer.phi = l.at("phi").get<std::vector<std::size_t>>();
        layer.k_merge = l.at("k_merge").get<std::size_t>();
        std::size_t n_clusters =
            layer.phi.empty()
                ? 0
                : *std::max_element(layer.phi.begin(), layer.phi.end()) + 1;
        layer.clusters.resize(n_clusters);
        for (std::size_t i = 0; i < layer.phi.size(); ++i)
          layer.clusters[layer.phi[i]].push_back(i);
        m.layers.push_back(std::move(layer));
      }
      out.map = std::move(m);
    }
  } catch (const nlohmann::json::exception&) {
    throw format_error("compression map JSON missing required field");
  }
  return out;
}

std::vector<std::vector<double>> expert_saliency(const MoEModel& model,
                                                 const TokenBatch& calib) {
  if (calib.empty())
    throw std::invalid_argument("expert_saliency: empty calibration set");

  const std::size_t n_layers = model.layers.size();
  std::vector<std::vector<double>> sums(n_layers), counts(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    sums[l].assign(model.layers[l].n_experts(), 0.0);
    counts[l].assign(model.layers[l].n_experts(), 0.0);
  }

  ForwardResult fwd = forward(model, calib, {.record_io = true});
  for (std::size_t s = 0; s < calib.size(); ++s) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      for (std::size_t t = 0; t < calib[s].tokens.size(); ++t) {
        if (!calib[s].mask[t]) continue;
        const LayerTokenTrace& e = fwd.trace.entries[s][l][t];
        for (std::size_t j = 0; j < e.selected.size(); ++j) {
          std::size_t i = e.selected[j];
          std::vector<double> out =
              expert_forward(model.layers[l].experts[i], e.input);
          double norm = std::sqrt(kernels::dot(out.data(), out.data(),
                                               out.size()));
          sums[l][i] += e.weights[j] * norm;
          counts[l][i] += 1.0;
        }
      }
    }
  }
  for (std::size_t l = 0; l < n_layers; ++l)
    for (std::size_t i = 0; i < sums[l].size(); ++i)
      if (counts[l][i] > 0.0) sums[l][i] /= counts[l][i];
  return sums;
}

std::pair<MoEModel, PruneMap> prune_experts(const MoEModel& model,
                                            double retention,
                                            const TokenBatch& calib) {
  std::vector<std::vector<double>> saliency = expert_saliency(model, calib);

  MoEModel student;
  student.config = model.config;
  student.embedding = model.embedding;
  student.output_head = model.output_head;
  PruneMap map;

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoELayer& layer = model.layers[l];
    const std::size_t n_exp = layer.n_experts();
    const std::size_t n_keep = static_cast<std::size_t>(
        std::ceil(retention * static_cast<double>(n_exp)));
    if (n_keep < layer.top_k || n_keep > n_exp)
      throw std::invalid_argument(
          "prune_experts: retention keeps fewer than top_k experts");

    std::vector<std::size_t> order(n_exp);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return saliency[l][a] > saliency[l][b];
                     });
    std::vector<std::size_t> retained(order.begin(), order.begin() + n_keep);
    std::sort(retained.begin(), retained.end());

    MoELayer slayer;
    slayer.top_k = layer.top_k;
    slayer.router = Matrix(n_keep, layer.router.cols);
    for (std::size_t j = 0; j < n_keep; ++j) {
      std::copy(layer.router.row(retained[j]),
                layer.router.row(retained[j]) + layer.router.cols,
                slayer.router.row(j));
      slayer.experts.push_back(layer.experts[retained[j]]);
    }
    student.layers.push_back(std::move(slayer));
    map.layers.push_back({std::move(retained)});
  }
  return {std::move(student), std::move(map)};
}

std::pair<MoEModel, EditMap> edit_experts(const MoEModel& model,
                                          double rank_ratio) {
  if (!(rank_ratio > 0.0 && rank_ratio <= 1.0))
    throw std::invalid_argument("edit_experts: rank_ratio in (0, 1]");

  MoEModel student = model;
  EditMap map;
  map.layers.resize(model.layers.size());

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t i = 0; i < model.layers[l].n_experts(); ++i) {
      const ExpertWeights& e = model.layers[l].experts[i];
      const std::size_t min_dim = std::min(e.w_in.rows, e.w_in.cols);
      const std::size_t r = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(
                 rank_ratio * static_cast<double>(min_dim))));

      ExpertWeights& se = student.layers[l].experts[i];
      se.w_in = svd_reconstruct(truncated_svd(e.w_in, r));
      se.w_out = svd_reconstruct(truncated_svd(e.w_out, r));
      map.layers[l].push_back({r, frobenius_norm_diff(e.w_in, se.w_in),
                               frobenius_norm_diff(e.w_out, se.w_out)});
    }
  }
  return {std::move(student), std::move(map)};
}

std::vector<std::size_t> average_linkage_clusters(const Matrix& distances,
                                                  std::size_t n_clusters) {
  const std::size_t n = distances.rows;
  if (distances.cols != n || n_clusters < 1 || n_clusters > n)
    throw std::invalid_argument("average_linkage_clusters: bad arguments");

  // members[i] non-empty only for active clusters; cluster key = smallest
  // member, which is stable under merging into the lower key.
  std::vector<std::vector<std::size_t>> members(n);
  Matrix link = distances;  // linkage between active cluster keys
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  std::size_t remaining = n;
  while (remaining > n_clusters) {
    std::size_t best_a = 0, best_b = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        if (link(a, b) < best_d) {
          best_d = link(a, b);
          best_a = a;
          best_b = b;
        }
      }
    }
    // Lance-Williams update for average linkage.
    const double na = static_cast<double>(members[best_a].size());
    const double nb = static_cast<double>(members[best_b].size());
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == best_a || c == best_b) continue;
      double d = (na * link(best_a, c) + nb * link(best_b, c)) / (na + nb);
      link(best_a, c) = d;
      link(c, best_a) = d;
    }
    members[best_a].insert(members[best_a].end(), members[best_b].begin(),
                           members[best_b].end());
    members[best_b].clear();
    active[best_b] = false;
    --remaining;
  }

  std::vector<std::size_t> labels(n);
  std::size_t next = 0;
  for (std::size_t a = 0; a < n; ++a) {
    if (!active[a]) continue;
    for (std::size_t m : members[a]) labels[m] = next;
    ++next;
  }
  return labels;
}

std::pair<MoEModel, MergeMap> merge_experts(const MoEModel& model,
                                            std::size_t target_count,
                                            const TokenBatch& calib) {
  std::vector<std::vector<double>> saliency = expert_saliency(model, calib);
  ForwardResult fwd = forward(model, calib, {.record_io = true});

  MoEModel student;
  student.config = model.config;
  student.embedding = model.embedding;
  student.output_head = model.output_head;
  MergeMap map;

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoELayer& layer = model.layers[l];
    const std::size_t n_exp = layer.n_experts();
    if (target_count < layer.top_k || target_count > n_exp)
      throw std::invalid_argument("merge_experts: target count out of range");

    // Mean output of every expert over calibration tokens (dense pass).
    std::vector<std::vector<double>> mean_out(
        n_exp, std::vector<double>(model.config.d_model, 0.0));
    double token_count = 0.0;
    for (std::size_t s = 0; s < calib.size(); ++s) {
      for (std::size_t t = 0; t < calib[s].tokens.size(); ++t) {
        if (!calib[s].mask[t]) continue;
        const std::vector<double>& x = fwd.trace.entries[s][l][t].input;
        for (std::size_t i = 0; i < n_exp; ++i) {
          std::vector<double> out = expert_forward(layer.experts[i], x);
          kernels::axpy(1.0, out.data(), mean_out[i].data(), out.size());
        }
        token_count += 1.0;
      }
    }
    for (auto& v : mean_out)
      for (double& e : v) e /= token_count;

    Matrix dist(n_exp, n_exp);
    for (std::size_t a = 0; a < n_exp; ++a)
      for (std::size_t b = a + 1; b < n_exp; ++b) {
        double sum = 0.0;
        for (std::size_t z = 0; z < model.config.d_model; ++z) {
          double d = mean_out[a][z] - mean_out[b][z];
          sum += d * d;
        }
        dist(a, b) = dist(b, a) = std::sqrt(sum);
      }

    MergeMap::Layer mlayer;
    mlayer.phi = average_linkage_clusters(dist, target_count);
    mlayer.k_merge = std::min(layer.top_k, target_count);
    mlayer.clusters.resize(target_count);
    for (std::size_t i = 0; i < n_exp; ++i)
      mlayer.clusters[mlayer.phi[i]].push_back(i);

    MoELayer slayer;
    slayer.top_k = mlayer.k_merge;
    slayer.router = Matrix(target_count, layer.router.cols);
    slayer.experts.resize(target_count);
    for (std::size_t c = 0; c < target_count; ++c) {
      const std::vector<std::size_t>& cluster = mlayer.clusters[c];
      double sal_sum = 0.0;
      for (std::size_t i : cluster) sal_sum += saliency[l][i];

      ExpertWeights& me = slayer.experts[c];
      me.w_in = Matrix(model.config.d_ff, model.config.d_model);
      me.w_out = Matrix(model.config.d_model, model.config.d_ff);
      for (std::size_t i : cluster) {
        double coeff = sal_sum > 0.0
                           ? saliency[l][i] / sal_sum
                           : 1.0 / static_cast<double>(cluster.size());
        kernels::axpy(coeff, layer.experts[i].w_in.data.data(),
                      me.w_in.data.data(), me.w_in.data.size());
        kernels::axpy(coeff, layer.experts[i].w_out.data.data(),
                      me.w_out.data.data(), me.w_out.data.size());
        kernels::axpy(1.0 / static_cast<double>(cluster.size()),
                      layer.router.row(i), slayer.router.row(c),
                      model.config.d_model);
      }
    }
    student.layers.push_back(std::move(slayer));
    map.layers.push_back(std::move(mlayer));
  }
  return {std::move(student), std::move(map)};
}

}  // namespace moelab

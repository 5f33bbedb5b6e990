// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <variant>
#include <vector>

#include "moelab/model.hpp"

namespace moelab {

// Per layer: retained expert indices, ascending. The old->new remap is
// positional: retained[j] -> j.
struct PruneMap {
  struct Layer {
    std::vector<std::size_t> retained;
  };
  std::vector<Layer> layers;
};

struct EditMap {
  struct ExpertEdit {
    std::size_t rank = 0;
    double err_w_in = 0.0;   // Frobenius reconstruction error
    double err_w_out = 0.0;
  };
  std::vector<std::vector<ExpertEdit>> layers;  // [layer][expert]
};

struct MergeMap {
  struct Layer {
    std::vector<std::size_t> phi;  // original expert -> cluster, surjective
    std::vector<std::vector<std::size_t>> clusters;  // member lists
    std::size_t k_merge = 0;
  };
  std::vector<Layer> layers;
};

enum class CompressionMethod { prune, edit, merge };

struct CompressionMap {
  CompressionMethod method;
  std::variant<PruneMap, EditMap, MergeMap> map;
};

std::string to_string(CompressionMethod method);
CompressionMethod compression_method_from_string(const std::string& s);

void save_compression_map(const CompressionMap& map, const std::string& path);
CompressionMap load_compression_map(const std::string& path);

// saliency(l, i) = mean over calibration tokens routed to expert i of
// g~_i(x) * ||E_i(x)||_2; experts never routed score 0.
std::vector<std::vector<double>> expert_saliency(const MoEModel& model,
                                                 const TokenBatch& calib);

// Keep the ceil(retention * E) highest-saliency experts per layer and delete
// the rest together with their router rows.
std::pair<MoEModel, PruneMap> prune_experts(const MoEModel& model,
                                            double retention,
                                            const TokenBatch& calib);

// Replace every expert weight matrix by its rank-r truncated-SVD
// reconstruction, r = max(1, floor(rank_ratio * min(d_model, d_ff))).
std::pair<MoEModel, EditMap> edit_experts(const MoEModel& model,
                                          double rank_ratio);

// Average-linkage agglomerative clustering of mean expert outputs down to
// target_count clusters; merged weights are saliency-weighted averages,
// merged router rows arithmetic means of member rows.
std::pair<MoEModel, MergeMap> merge_experts(const MoEModel& model,
                                            std::size_t target_count,
                                            const TokenBatch& calib);

// Average-linkage agglomerative clustering on a symmetric distance matrix.
// Active clusters are keyed by their smallest member; among equal linkage
// distances the lexicographically smallest pair merges first. Returns
// cluster assignment labels 0..(n_clusters-1) ordered by smallest member.
std::vector<std::size_t> average_linkage_clusters(const Matrix& distances,
                                                  std::size_t n_clusters);

}  // namespace moelab

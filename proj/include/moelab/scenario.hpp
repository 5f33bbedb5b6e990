// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "moelab/compress.hpp"
#include "moelab/model.hpp"

namespace moelab {

enum class Outcome { best, common, worst };

struct ScenarioLabel {
  CompressionMethod paradigm;
  int merge_case = 0;  // 1..3 for merge paradigms, 0 otherwise
  Outcome outcome = Outcome::common;

  bool operator==(const ScenarioLabel&) const = default;
};

// "best"/"common"/"worst", or "case<N>.<outcome>" for merge labels.
std::string to_string(const ScenarioLabel& label);

// S: original selection; P: retained set; S_prime: selection of the pruned
// model, expressed in original expert indices.
ScenarioLabel classify_prune(const std::vector<std::size_t>& s,
                             const std::vector<std::size_t>& p,
                             const std::vector<std::size_t>& s_prime);

ScenarioLabel classify_edit(const std::vector<std::size_t>& s,
                            const std::vector<std::size_t>& s_edit);

// phi maps original expert index -> cluster; S_merge lives in cluster space.
ScenarioLabel classify_merge(const std::vector<std::size_t>& s,
                             const std::vector<std::size_t>& phi,
                             const std::vector<std::size_t>& s_merge,
                             std::size_t k_merge);

// Exact same-input split of y_orig - y_comp into the three routing terms.
// The identity total == ||weight_shift + information_loss -
// substitution_noise|| holds to f64 rounding; recombined_norm() evaluates
// the right-hand side.
struct DiscrepancyDecomposition {
  double total = 0.0;  // ||y_orig - y_comp|| from the recorded layer outputs
  std::vector<double> weight_shift;
  std::vector<double> information_loss;
  std::vector<double> substitution_noise;
  std::vector<std::size_t> t_set, d_set, r_set;
  ScenarioLabel label;

  double recombined_norm() const;
};

// All decompose_* functions require both trace entries to carry input and
// moe_output (record_io) computed from the same layer input.
DiscrepancyDecomposition decompose_prune(const LayerTokenTrace& orig,
                                         const LayerTokenTrace& pruned,
                                         const MoELayer& orig_layer,
                                         const std::vector<std::size_t>& retained);

DiscrepancyDecomposition decompose_edit(const LayerTokenTrace& orig,
                                        const LayerTokenTrace& edited,
                                        const MoELayer& orig_layer,
                                        const MoELayer& edited_layer);

DiscrepancyDecomposition decompose_merge(const LayerTokenTrace& orig,
                                         const LayerTokenTrace& merged,
                                         const MoELayer& orig_layer,
                                         const MoELayer& merged_layer,
                                         const std::vector<std::size_t>& phi,
                                         std::size_t k_merge);

// Per-layer label frequencies over paired same-input forwards: the teacher's
// per-layer inputs are fed to both the teacher layer and the student layer.
// Only mask==1 positions are counted.
struct ScenarioCensus {
  std::vector<std::map<std::string, std::size_t>> per_layer;
  std::size_t token_count = 0;
};

ScenarioCensus scenario_census(const MoEModel& teacher, const MoEModel& student,
                               const CompressionMap& map,
                               const TokenBatch& calib);

}  // namespace moelab

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moelab/compress.hpp"
#include "moelab/model.hpp"

namespace moelab {

struct LayerReport {
  double mean_l1 = 0.0;
  double overlap_ratio = 0.0;
  double mean_entropy = 0.0;
  std::size_t token_count = 0;
};

// Same-shape trace comparisons (identical routing spaces).
std::vector<double> routing_l1(const RoutingTrace& a, const RoutingTrace& b);
std::vector<double> topk_overlap(const RoutingTrace& a, const RoutingTrace& b);

// Per-layer mean gate entropy in nats, 0*ln(0) = 0.
std::vector<double> routing_entropy(const RoutingTrace& trace);

// Exact C(E, k) via the multiplicative formula with 128-bit intermediates.
std::uint64_t routing_space_size(std::size_t n_experts, std::size_t k);

// Teacher-vs-student comparison under the per-paradigm conventions:
//  - prune: teacher scores restricted to the retained set and renormalized;
//    overlap counts the student's selection mapped back to original indices.
//  - edit (or map == nullptr): routing spaces coincide, direct comparison.
//  - merge: teacher scores projected to cluster space by summing member
//    probabilities; overlap = |phi(S) ∩ S_merge| / |phi(S)|.
struct RoutingComparison {
  std::vector<double> mean_l1;
  std::vector<double> mean_overlap;
  std::vector<std::size_t> token_count;
};
RoutingComparison compare_traces(const RoutingTrace& teacher,
                                 const RoutingTrace& student,
                                 const CompressionMap* map);

// Writes l1.csv / overlap.csv / entropy.csv ("layer,value,token_count") and
// summary.json into dir. Values serialized with 17 significant digits so the
// round-trip is lossless; byte output is deterministic.
void emit_report(const std::vector<LayerReport>& reports,
                 const std::string& dir, const std::string& summary_json);

// f64 -> shortest-round-trip-safe decimal (17 significant digits).
std::string format_f64(double v);

}  // namespace moelab

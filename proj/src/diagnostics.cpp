// SPDX-License-Identifier: Apache-2.0

#include "moelab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "moelab/common.hpp"
#include "moelab/tensor.hpp"

namespace moelab {

namespace {

void check_aligned(const RoutingTrace& a, const RoutingTrace& b) {
  if (a.entries.size() != b.entries.size())
    throw std::invalid_argument("trace comparison: sequence count mismatch");
  for (std::size_t s = 0; s < a.entries.size(); ++s) {
    if (a.entries[s].size() != b.entries[s].size())
      throw std::invalid_argument("trace comparison: layer count mismatch");
    for (std::size_t l = 0; l < a.entries[s].size(); ++l)
      if (a.entries[s][l].size() != b.entries[s][l].size())
        throw std::invalid_argument("trace comparison: token misalignment");
  }
}

std::size_t n_layers_of(const RoutingTrace& t) {
  return t.entries.empty() ? 0 : t.entries[0].size();
}

}  // namespace

std::vector<double> routing_l1(const RoutingTrace& a, const RoutingTrace& b) {
  check_aligned(a, b);
  const std::size_t n_layers = n_layers_of(a);
  std::vector<double> sums(n_layers, 0.0);
  std::vector<std::size_t> counts(n_layers, 0);
  for (std::size_t s = 0; s < a.entries.size(); ++s)
    for (std::size_t l = 0; l < n_layers; ++l)
      for (std::size_t t = 0; t < a.entries[s][l].size(); ++t) {
        sums[l] += l1_distance(a.entries[s][l][t].scores,
                               b.entries[s][l][t].scores);
        ++counts[l];
      }
  for (std::size_t l = 0; l < n_layers; ++l)
    if (counts[l]) sums[l] /= static_cast<double>(counts[l]);
  return sums;
}

std::vector<double> topk_overlap(const RoutingTrace& a, const RoutingTrace& b) {
  check_aligned(a, b);
  const std::size_t n_layers = n_layers_of(a);
  std::vector<double> sums(n_layers, 0.0);
  std::vector<std::size_t> counts(n_layers, 0);
  for (std::size_t s = 0; s < a.entries.size(); ++s)
    for (std::size_t l = 0; l < n_layers; ++l)
      for (std::size_t t = 0; t < a.entries[s][l].size(); ++t) {
        const auto& sa = a.entries[s][l][t].selected;
        const auto& sb = b.entries[s][l][t].selected;
        std::set<std::size_t> bs(sb.begin(), sb.end());
        std::size_t inter = 0;
        for (std::size_t i : sa) inter += bs.count(i);
        sums[l] += static_cast<double>(inter) / static_cast<double>(sa.size());
        ++counts[l];
      }
  for (std::size_t l = 0; l < n_layers; ++l)
    if (counts[l]) sums[l] /= static_cast<double>(counts[l]);
  return sums;
}

std::vector<double> routing_entropy(const RoutingTrace& trace) {
  const std::size_t n_layers = n_layers_of(trace);
  std::vector<double> sums(n_layers, 0.0);
  std::vector<std::size_t> counts(n_layers, 0);
  for (const auto& seq : trace.entries)
    for (std::size_t l = 0; l < n_layers; ++l)
      for (const auto& entry : seq[l]) {
        double h = 0.0;
        for (double g : entry.scores)
          if (g > 0.0) h -= g * std::log(g);
        sums[l] += h;
        ++counts[l];
      }
  for (std::size_t l = 0; l < n_layers; ++l)
    if (counts[l]) sums[l] /= static_cast<double>(counts[l]);
  return sums;
}

std::uint64_t routing_space_size(std::size_t n_experts, std::size_t k) {
  if (k > n_experts)
    throw std::invalid_argument("routing_space_size: k > E");
  if (k > n_experts - k) k = n_experts - k;
  unsigned __int128 result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    result *= n_experts - k + i;
    result /= i;  // exact: the running value is C(E-k+i, i)
    if (result > static_cast<unsigned __int128>(UINT64_MAX))
      throw numerical_error("routing_space_size: result exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(result);
}

RoutingComparison compare_traces(const RoutingTrace& teacher,
                                 const RoutingTrace& student,
                                 const CompressionMap* map) {
  check_aligned(teacher, student);
  const std::size_t n_layers = n_layers_of(teacher);
  RoutingComparison out;
  out.mean_l1.assign(n_layers, 0.0);
  out.mean_overlap.assign(n_layers, 0.0);
  out.token_count.assign(n_layers, 0);

  for (std::size_t s = 0; s < teacher.entries.size(); ++s) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      for (std::size_t t = 0; t < teacher.entries[s][l].size(); ++t) {
        const LayerTokenTrace& te = teacher.entries[s][l][t];
        const LayerTokenTrace& se = student.entries[s][l][t];

        double l1 = 0.0, overlap = 0.0;
        if (!map || map->method == CompressionMethod::edit) {
          l1 = l1_distance(te.scores, se.scores);
          std::set<std::size_t> sb(se.selected.begin(), se.selected.end());
          std::size_t inter = 0;
          for (std::size_t i : te.selected) inter += sb.count(i);
          overlap = static_cast<double>(inter) /
                    static_cast<double>(te.selected.size());
        } else if (map->method == CompressionMethod::prune) {
          const auto& retained =
              std::get<PruneMap>(map->map).layers[l].retained;
          std::vector<double> projected(retained.size());
          double sum = 0.0;
          for (std::size_t j = 0; j < retained.size(); ++j) {
            projected[j] = te.scores[retained[j]];
            sum += projected[j];
          }
          for (double& v : projected) v /= sum;
          l1 = l1_distance(projected, se.scores);

          std::set<std::size_t> s_prime;
          for (std::size_t j : se.selected) s_prime.insert(retained[j]);
          std::size_t inter = 0;
          for (std::size_t i : te.selected) inter += s_prime.count(i);
          overlap = static_cast<double>(inter) /
                    static_cast<double>(te.selected.size());
        } else {
          const auto& ml = std::get<MergeMap>(map->map).layers[l];
          std::vector<double> projected(ml.clusters.size(), 0.0);
          for (std::size_t i = 0; i < ml.phi.size(); ++i)
            projected[ml.phi[i]] += te.scores[i];
          l1 = l1_distance(projected, se.scores);

          std::set<std::size_t> proj_sel;
          for (std::size_t i : te.selected) proj_sel.insert(ml.phi[i]);
          std::set<std::size_t> sm(se.selected.begin(), se.selected.end());
          std::size_t inter = 0;
          for (std::size_t c : proj_sel) inter += sm.count(c);
          overlap = static_cast<double>(inter) /
                    static_cast<double>(proj_sel.size());
        }
        out.mean_l1[l] += l1;
        out.mean_overlap[l] += overlap;
        ++out.token_count[l];
      }
    }
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (!out.token_count[l]) continue;
    out.mean_l1[l] /= static_cast<double>(out.token_count[l]);
    out.mean_overlap[l] /= static_cast<double>(out.token_count[l]);
  }
  return out;
}

std::string format_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void write_csv(const std::string& path, const std::vector<LayerReport>& reports,
               double LayerReport::*field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("emit_report: cannot open " + path);
  os << "layer,value,token_count\n";
  for (std::size_t l = 0; l < reports.size(); ++l)
    os << l << "," << format_f64(reports[l].*field) << ","
       << reports[l].token_count << "\n";
  if (!os) throw std::runtime_error("emit_report: write failed: " + path);
}

}  // namespace

void emit_report(const std::vector<LayerReport>& reports,
                 const std::string& dir, const std::string& summary_json) {
  std::filesystem::create_directories(dir);
  write_csv(dir + "/l1.csv", reports, &LayerReport::mean_l1);
  write_csv(dir + "/overlap.csv", reports, &LayerReport::overlap_ratio);
  write_csv(dir + "/entropy.csv", reports, &LayerReport::mean_entropy);
  std::ofstream os(dir + "/summary.json", std::ios::binary);
  if (!os) throw std::runtime_error("emit_report: cannot open summary.json");
  os << summary_json << "\n";
}

}  // namespace moelab

// SPDX-License-Identifier: Apache-2.0

#include "moelab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "moelab/kernels.hpp"

namespace moelab {

namespace {

bool is_subset(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

bool disjoint(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  for (std::size_t x : a)
    if (b.count(x)) return false;
  return true;
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

void check_same_input(const LayerTokenTrace& a, const LayerTokenTrace& b) {
  if (a.input.empty() || b.input.empty() || a.moe_output.empty() ||
      b.moe_output.empty())
    throw std::invalid_argument(
        "decompose: trace entries must be recorded with record_io");
  if (a.input != b.input)
    throw std::invalid_argument(
        "decompose: traces were not computed from the same layer input");
}

double norm2(const std::vector<double>& v) {
  return std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
}

std::vector<double> diff_norm_vec(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

}  // namespace

std::string to_string(const ScenarioLabel& label) {
  std::string outcome = label.outcome == Outcome::best     ? "best"
                        : label.outcome == Outcome::common ? "common"
                                                           : "worst";
  if (label.paradigm == CompressionMethod::merge)
    return "case" + std::to_string(label.merge_case) + "." + outcome;
  return outcome;
}

ScenarioLabel classify_prune(const std::vector<std::size_t>& s,
                             const std::vector<std::size_t>& p,
                             const std::vector<std::size_t>& s_prime) {
  (void)s_prime;  // the prune taxonomy is determined by S vs P
  auto ss = as_set(s), ps = as_set(p);
  ScenarioLabel label{CompressionMethod::prune, 0, Outcome::common};
  if (is_subset(ss, ps))
    label.outcome = Outcome::best;
  else if (disjoint(ss, ps))
    label.outcome = Outcome::worst;
  return label;
}

ScenarioLabel classify_edit(const std::vector<std::size_t>& s,
                            const std::vector<std::size_t>& s_edit) {
  auto ss = as_set(s), es = as_set(s_edit);
  ScenarioLabel label{CompressionMethod::edit, 0, Outcome::common};
  if (ss == es)
    label.outcome = Outcome::best;
  else if (disjoint(ss, es))
    label.outcome = Outcome::worst;
  return label;
}

ScenarioLabel classify_merge(const std::vector<std::size_t>& s,
                             const std::vector<std::size_t>& phi,
                             const std::vector<std::size_t>& s_merge,
                             std::size_t k_merge) {
  std::set<std::size_t> c_proj;
  for (std::size_t i : s) {
    if (i >= phi.size())
      throw std::invalid_argument("classify_merge: phi undefined on index");
    c_proj.insert(phi[i]);
  }
  auto ms = as_set(s_merge);

  ScenarioLabel label{CompressionMethod::merge, 0, Outcome::common};
  if (c_proj.size() == 1) {
    label.merge_case = 1;
    std::size_t c_star = *c_proj.begin();
    if (ms == c_proj)
      label.outcome = Outcome::best;
    else if (!ms.count(c_star))
      label.outcome = Outcome::worst;
  } else if (c_proj.size() <= k_merge) {
    label.merge_case = 2;
    if (ms == c_proj)
      label.outcome = Outcome::best;
    else if (disjoint(c_proj, ms))
      label.outcome = Outcome::worst;
  } else {
    label.merge_case = 3;
    if (is_subset(ms, c_proj))
      label.outcome = Outcome::best;  // capacity saturation
    else if (disjoint(c_proj, ms))
      label.outcome = Outcome::worst;
  }
  return label;
}

double DiscrepancyDecomposition::recombined_norm() const {
  std::vector<double> sum(weight_shift.size(), 0.0);
  for (std::size_t i = 0; i < sum.size(); ++i)
    sum[i] = weight_shift[i] + information_loss[i] - substitution_noise[i];
  return norm2(sum);
}

DiscrepancyDecomposition decompose_prune(
    const LayerTokenTrace& orig, const LayerTokenTrace& pruned,
    const MoELayer& orig_layer, const std::vector<std::size_t>& retained) {
  check_same_input(orig, pruned);
  const std::vector<double>& x = orig.input;
  const std::size_t d = x.size();

  // Pruned selection back in original index space.
  std::vector<std::size_t> s_prime;
  std::map<std::size_t, double> pruned_weight;  // original index -> g~
  for (std::size_t j = 0; j < pruned.selected.size(); ++j) {
    std::size_t oi = retained.at(pruned.selected[j]);
    s_prime.push_back(oi);
    pruned_weight[oi] = pruned.weights[j];
  }
  std::map<std::size_t, double> orig_weight;
  for (std::size_t j = 0; j < orig.selected.size(); ++j)
    orig_weight[orig.selected[j]] = orig.weights[j];

  DiscrepancyDecomposition out;
  out.label = classify_prune(orig.selected, retained, s_prime);
  out.weight_shift.assign(d, 0.0);
  out.information_loss.assign(d, 0.0);
  out.substitution_noise.assign(d, 0.0);

  for (auto& [i, gw] : orig_weight) {
    std::vector<double> e = expert_forward(orig_layer.experts[i], x);
    if (pruned_weight.count(i)) {
      out.t_set.push_back(i);
      kernels::axpy(gw - pruned_weight[i], e.data(), out.weight_shift.data(),
                    d);
    } else {
      out.d_set.push_back(i);
      kernels::axpy(gw, e.data(), out.information_loss.data(), d);
    }
  }
  for (auto& [i, gw] : pruned_weight) {
    if (orig_weight.count(i)) continue;
    out.r_set.push_back(i);
    std::vector<double> e = expert_forward(orig_layer.experts[i], x);
    kernels::axpy(gw, e.data(), out.substitution_noise.data(), d);
  }

  out.total = norm2(diff_norm_vec(orig.moe_output, pruned.moe_output));
  return out;
}

DiscrepancyDecomposition decompose_edit(const LayerTokenTrace& orig,
                                        const LayerTokenTrace& edited,
                                        const MoELayer& orig_layer,
                                        const MoELayer& edited_layer) {
  check_same_input(orig, edited);
  const std::vector<double>& x = orig.input;
  const std::size_t d = x.size();

  std::map<std::size_t, double> orig_weight, edit_weight;
  for (std::size_t j = 0; j < orig.selected.size(); ++j)
    orig_weight[orig.selected[j]] = orig.weights[j];
  for (std::size_t j = 0; j < edited.selected.size(); ++j)
    edit_weight[edited.selected[j]] = edited.weights[j];

  DiscrepancyDecomposition out;
  out.label = classify_edit(orig.selected, edited.selected);
  out.weight_shift.assign(d, 0.0);
  out.information_loss.assign(d, 0.0);
  out.substitution_noise.assign(d, 0.0);

  for (auto& [i, gw] : orig_weight) {
    std::vector<double> e = expert_forward(orig_layer.experts[i], x);
    if (edit_weight.count(i)) {
      out.t_set.push_back(i);
      std::vector<double> xe = expert_forward(edited_layer.experts[i], x);
      for (std::size_t z = 0; z < d; ++z)
        out.weight_shift[z] += gw * e[z] - edit_weight[i] * xe[z];
    } else {
      out.d_set.push_back(i);
      kernels::axpy(gw, e.data(), out.information_loss.data(), d);
    }
  }
  for (auto& [i, gw] : edit_weight) {
    if (orig_weight.count(i)) continue;
    out.r_set.push_back(i);
    std::vector<double> xe = expert_forward(edited_layer.experts[i], x);
    kernels::axpy(gw, xe.data(), out.substitution_noise.data(), d);
  }

  out.total = norm2(diff_norm_vec(orig.moe_output, edited.moe_output));
  return out;
}

DiscrepancyDecomposition decompose_merge(const LayerTokenTrace& orig,
                                         const LayerTokenTrace& merged,
                                         const MoELayer& orig_layer,
                                         const MoELayer& merged_layer,
                                         const std::vector<std::size_t>& phi,
                                         std::size_t k_merge) {
  check_same_input(orig, merged);
  const std::vector<double>& x = orig.input;
  const std::size_t d = x.size();

  std::set<std::size_t> c_proj;
  for (std::size_t i : orig.selected) c_proj.insert(phi.at(i));
  std::set<std::size_t> s_merge(merged.selected.begin(),
                                merged.selected.end());

  DiscrepancyDecomposition out;
  out.label = classify_merge(orig.selected, phi, merged.selected, k_merge);
  out.weight_shift.assign(d, 0.0);
  out.information_loss.assign(d, 0.0);
  out.substitution_noise.assign(d, 0.0);

  // Original-side terms, split by whether the expert's cluster was selected.
  for (std::size_t j = 0; j < orig.selected.size(); ++j) {
    std::size_t i = orig.selected[j];
    std::vector<double> e = expert_forward(orig_layer.experts[i], x);
    if (s_merge.count(phi[i]))
      kernels::axpy(orig.weights[j], e.data(), out.weight_shift.data(), d);
    else
      kernels::axpy(orig.weights[j], e.data(), out.information_loss.data(), d);
  }
  // Merged-side terms.
  for (std::size_t j = 0; j < merged.selected.size(); ++j) {
    std::size_t c = merged.selected[j];
    std::vector<double> m = expert_forward(merged_layer.experts[c], x);
    if (c_proj.count(c))
      kernels::axpy(-merged.weights[j], m.data(), out.weight_shift.data(), d);
    else
      kernels::axpy(merged.weights[j], m.data(),
                    out.substitution_noise.data(), d);
  }
  for (std::size_t c : c_proj)
    (s_merge.count(c) ? out.t_set : out.d_set).push_back(c);
  for (std::size_t c : s_merge)
    if (!c_proj.count(c)) out.r_set.push_back(c);

  out.total = norm2(diff_norm_vec(orig.moe_output, merged.moe_output));
  return out;
}

ScenarioCensus scenario_census(const MoEModel& teacher, const MoEModel& student,
                               const CompressionMap& map,
                               const TokenBatch& calib) {
  if (teacher.layers.size() != student.layers.size())
    throw std::invalid_argument("scenario_census: layer count mismatch");

  ForwardResult fwd = forward(teacher, calib, {.record_io = true});
  ScenarioCensus census;
  census.per_layer.resize(teacher.layers.size());

  for (std::size_t s = 0; s < calib.size(); ++s) {
    for (std::size_t t = 0; t < calib[s].tokens.size(); ++t) {
      if (!calib[s].mask[t]) continue;
      for (std::size_t l = 0; l < teacher.layers.size(); ++l) {
        const LayerTokenTrace& te = fwd.trace.entries[s][l][t];
        auto [y, se] = moe_layer_forward(student.layers[l], te.input, false);

        ScenarioLabel label;
        if (map.method == CompressionMethod::prune) {
          const auto& retained = std::get<PruneMap>(map.map).layers[l].retained;
          std::vector<std::size_t> s_prime;
          for (std::size_t j : se.selected) s_prime.push_back(retained[j]);
          label = classify_prune(te.selected, retained, s_prime);
        } else if (map.method == CompressionMethod::edit) {
          label = classify_edit(te.selected, se.selected);
        } else {
          const auto& ml = std::get<MergeMap>(map.map).layers[l];
          label = classify_merge(te.selected, ml.phi, se.selected, ml.k_merge);
        }
        ++census.per_layer[l][to_string(label)];
      }
      ++census.token_count;
    }
  }
  return census;
}

}  // namespace moelab

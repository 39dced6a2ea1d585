#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "obbm/exact_dp.hpp"
#include "obbm/generators.hpp"
#include "obbm/instance.hpp"
#include "obbm/rng.hpp"

namespace obbm {

// Randomly shifted grid over [0,1]^d with wrap-around: axis i is cut at
// s_i, s_i + 1/k, ... (mod 1), so cells are congruent boxes that may wrap.
struct Partition {
  int k = 1;
  int d = 1;
  std::vector<double> shift;  // one entry per axis, in [0, 1/k)
};

inline Partition sample_partition(int k, int d, uint64_t seed) {
  if (k < 1 || d < 1) throw std::invalid_argument("sample_partition: need k >= 1 and d >= 1");
  Rng rng(seed);
  Partition p{k, d, {}};
  p.shift.resize(d);
  for (double& s : p.shift) s = rng.real() / k;
  return p;
}

// Per-axis cell index: floor(((x_i - s_i) mod 1) * k).
inline std::vector<int> cell_index(const Partition& p, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != p.d) throw std::invalid_argument("cell_index: dimension mismatch");
  std::vector<int> cell(p.d);
  for (int i = 0; i < p.d; ++i) {
    double r = std::fmod(x[i] - p.shift[i], 1.0);
    if (r < 0.0) r += 1.0;
    int idx = static_cast<int>(r * p.k);
    if (idx >= p.k) idx = 0;  // r rounded up to 1.0; wraps to the first cell
    cell[i] = idx;
  }
  return cell;
}

// Mixed-radix encoding of the cell vector, for binning.
inline int64_t cell_code(const Partition& p, const std::vector<double>& x) {
  const std::vector<int> c = cell_index(p, x);
  int64_t code = 0;
  for (int i = 0; i < p.d; ++i) code = code * p.k + c[i];
  return code;
}

// Always derived, never chosen directly: k = ceil(eps / (2 d delta)).
inline int partition_resolution(double eps, int d, double delta) {
  if (!(eps > 0.0) || !(delta > 0.0) || d < 1) throw std::invalid_argument("partition_resolution: bad parameters");
  return static_cast<int>(std::ceil(eps / (2.0 * d * delta) - 1e-12));
}

// G(pi): edges whose endpoints share a cell, grouped into connected
// components. Components partition all m+n nodes; isolated nodes appear as
// singletons.
struct DecomposedGraph {
  const Instance* inst = nullptr;
  std::vector<int> kept_edges;                 // indices into inst->edges
  std::vector<std::vector<int>> comp_online;   // per component, ascending online ids
  std::vector<std::vector<int>> comp_offline;  // per component, ascending offline ids
};

inline DecomposedGraph decompose(const Instance& inst, const Partition& p) {
  if (inst.embeddings.empty()) throw std::invalid_argument("decompose: instance has no embeddings");
  if (inst.embedding_dim() != p.d) throw std::invalid_argument("decompose: partition dimension mismatch");
  const int m = inst.n_online, n = inst.n_offline;
  const int total = m + n;

  std::vector<int64_t> codes(total);
  for (int i = 0; i < total; ++i) codes[i] = cell_code(p, inst.embeddings[i]);

  std::vector<int> parent(total);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  DecomposedGraph out;
  out.inst = &inst;
  for (size_t e = 0; e < inst.edges.size(); ++e) {
    const int a = inst.edges[e].online;
    const int b = m + inst.edges[e].offline;
    if (codes[a] != codes[b]) continue;
    out.kept_edges.push_back(static_cast<int>(e));
    parent[find(a)] = find(b);
  }

  std::map<int, int> root_to_comp;
  for (int i = 0; i < total; ++i) {
    const int root = find(i);
    auto [it, inserted] = root_to_comp.emplace(root, static_cast<int>(out.comp_online.size()));
    if (inserted) {
      out.comp_online.emplace_back();
      out.comp_offline.emplace_back();
    }
    if (i < m)
      out.comp_online[it->second].push_back(i);
    else
      out.comp_offline[it->second].push_back(i - m);
  }
  return out;
}

inline int max_component_offline(const DecomposedGraph& g) {
  int mx = 0;
  for (const auto& c : g.comp_offline) mx = std::max(mx, static_cast<int>(c.size()));
  return mx;
}

inline int max_component_nodes(const DecomposedGraph& g) {
  int mx = 0;
  for (size_t i = 0; i < g.comp_online.size(); ++i)
    mx = std::max(mx, static_cast<int>(g.comp_online[i].size() + g.comp_offline[i].size()));
  return mx;
}

// V(G(pi)) as the sum of per-component values. Components share no nodes and
// so do not interact; each is solved as its own instance with the original
// arrival order and probabilities.
inline double component_vtg(const DecomposedGraph& g, int dp_limit = kDefaultDpLimit) {
  const Instance& inst = *g.inst;
  double total = 0.0;
  for (size_t comp = 0; comp < g.comp_online.size(); ++comp) {
    const auto& online = g.comp_online[comp];
    const auto& offline = g.comp_offline[comp];
    if (online.empty() || offline.empty()) continue;
    if (static_cast<int>(offline.size()) > dp_limit)
      throw std::invalid_argument("component_vtg: component exceeds the DP limit");

    std::map<int, int> online_map, offline_map;
    for (size_t i = 0; i < online.size(); ++i) online_map[online[i]] = static_cast<int>(i);
    for (size_t i = 0; i < offline.size(); ++i) offline_map[offline[i]] = static_cast<int>(i);

    Instance sub;
    sub.n_online = static_cast<int>(online.size());
    sub.n_offline = static_cast<int>(offline.size());
    sub.arrival_probs.resize(online.size());
    for (size_t i = 0; i < online.size(); ++i) sub.arrival_probs[i] = inst.arrival_probs[online[i]];
    for (int e : g.kept_edges) {
      const Edge& edge = inst.edges[e];
      const auto ot = online_map.find(edge.online);
      const auto ou = offline_map.find(edge.offline);
      if (ot == online_map.end() || ou == offline_map.end()) continue;
      sub.edges.push_back({ot->second, ou->second, edge.weight});
    }
    if (sub.edges.empty()) continue;
    sub.finalize();
    total += vtg_full(sub, dp_limit);
  }
  return total;
}

struct LocalityParams {
  double eps = 0.25;      // target relative error
  double fail_prob = 0.5; // delta in the sample-count bound
  double delta = 0.0;     // geometric radius of the instance family
  int samples = 0;        // ell; 0 means "use required_samples"
  int dp_limit = kDefaultDpLimit;
};

// Hoeffding count: ell >= (2/eps^2) ln(4/delta).
inline int required_samples(double eps, double fail_prob) {
  if (!(eps > 0.0) || !(fail_prob > 0.0)) throw std::invalid_argument("required_samples: bad parameters");
  return static_cast<int>(std::ceil((2.0 / (eps * eps)) * std::log(4.0 / fail_prob) - 1e-12));
}

struct McLocalReport {
  double estimate = 0.0;
  std::vector<double> sample_values;  // NaN where the sample was skipped
  int skipped = 0;
  int max_component_nodes = 0;
  int k = 0;
  int samples = 0;
};

// Monte Carlo estimate of V(G) from random partitions: mean of V(G(pi_i))
// over the samples whose every component fits the DP limit; oversized
// samples are skipped and flagged, never silently truncated.
inline McLocalReport mc_local_estimate(const Instance& inst, const LocalityParams& params, uint64_t seed) {
  if (inst.embeddings.empty()) throw std::invalid_argument("mc_local_estimate: instance has no embeddings");
  if (!(params.delta > 0.0)) throw std::invalid_argument("mc_local_estimate: geometric radius not set");
  const int d = inst.embedding_dim();
  McLocalReport report;
  report.k = partition_resolution(params.eps, d, params.delta);
  report.samples = params.samples > 0 ? params.samples : required_samples(params.eps, params.fail_prob);

  double sum = 0.0;
  int kept = 0;
  for (int i = 0; i < report.samples; ++i) {
    const Partition pi = sample_partition(report.k, d, Rng::derive(seed, 0x10CA1, i));
    const DecomposedGraph g = decompose(inst, pi);
    report.max_component_nodes = std::max(report.max_component_nodes, max_component_nodes(g));
    if (max_component_offline(g) > params.dp_limit) {
      ++report.skipped;
      report.sample_values.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double v = component_vtg(g, params.dp_limit);
    report.sample_values.push_back(v);
    sum += v;
    ++kept;
  }
  report.estimate = kept > 0 ? sum / kept : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Verifiers. Each returns a small report that serializes to
// {lemma, params, trials, statistic, bound, pass}.

struct VerifierReport {
  std::string lemma;
  json params;
  int trials = 0;
  double statistic = 0.0;
  double bound = 0.0;
  bool pass = false;
  json extra;

  json to_json() const {
    json j = {{"lemma", lemma}, {"params", params}, {"trials", trials},
              {"statistic", statistic}, {"bound", bound}, {"pass", pass}};
    if (!extra.is_null()) j["extra"] = extra;
    return j;
  }
};

// Empirical probability that two points at l-infinity distance exactly delta
// land in different cells. The bound from the partition geometry is
// 1 - (1 - k*delta)^d <= eps; in one dimension the rate is exactly k*delta.
inline VerifierReport verify_cut_probability(double delta, int d, double eps, int trials, uint64_t seed) {
  if (!(delta > 0.0) || d < 1 || !(eps > 0.0) || trials <= 0)
    throw std::invalid_argument("verify_cut_probability: bad parameters");
  if (delta > eps / (2.0 * d) + 1e-12)
    throw std::invalid_argument("verify_cut_probability: delta must be at most eps/(2d)");
  const int k = partition_resolution(eps, d, delta);
  Rng rng(seed);
  int separated = 0;
  std::vector<double> x(d), y(d);
  for (int trial = 0; trial < trials; ++trial) {
    for (int i = 0; i < d; ++i) {
      x[i] = rng.real();
      y[i] = x[i] + delta <= 1.0 ? x[i] + delta : x[i] - delta;
    }
    const Partition p = sample_partition(k, d, rng.next());
    if (cell_index(p, x) != cell_index(p, y)) ++separated;
  }
  VerifierReport r;
  r.lemma = "cut-probability";
  r.params = {{"delta", delta}, {"d", d}, {"eps", eps}, {"k", k}};
  r.trials = trials;
  r.statistic = static_cast<double>(separated) / trials;
  r.bound = eps;
  const double sigma = std::sqrt(eps * (1.0 - eps) / trials);
  r.pass = r.statistic <= eps + 3.0 * sigma;
  r.extra = {{"sigma", sigma},
             {"closed_form", 1.0 - std::pow(1.0 - std::min(1.0, k * delta), d)},
             {"closed_form_d1", k * delta}};
  return r;
}

// Occupancy check: N points from a density-bounded spec, binned by a random
// partition with k^d >= N cells; the max load should stay below
// 3 * beta * ln N / ln ln N except with probability O(1/N) (c/N with c = 10).
inline VerifierReport verify_max_load(int num_points, int d, int k, const SmoothSpec& spec, int trials,
                                      uint64_t seed) {
  if (num_points < 1 || d < 1 || k < 1 || trials <= 0)
    throw std::invalid_argument("verify_max_load: bad parameters");
  double cells = 1.0;
  for (int i = 0; i < d; ++i) cells *= k;
  if (cells < num_points) throw std::invalid_argument("verify_max_load: need k^d >= N");
  spec.validate(d);
  const double beta = spec.beta(d);
  // ln ln N is only positive from N = 3 up; below that the bound is vacuous.
  const double threshold = num_points >= 3
                               ? 3.0 * beta * std::log(num_points) / std::log(std::log(num_points))
                               : std::numeric_limits<double>::infinity();
  constexpr double kC = 10.0;

  std::map<int, int> histogram;  // max load -> trial count
  int exceed = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const Partition p = sample_partition(k, d, Rng::derive(seed, 0x10AD, trial));
    Rng rng(Rng::derive(seed, 0xB0B5, trial));
    std::map<int64_t, int> load;
    int max_load = 0;
    for (int i = 0; i < num_points; ++i) {
      const std::vector<double> x = spec.sample(d, rng);
      max_load = std::max(max_load, ++load[cell_code(p, x)]);
    }
    ++histogram[max_load];
    if (static_cast<double>(max_load) > threshold) ++exceed;
  }

  VerifierReport r;
  r.lemma = "max-load";
  r.params = {{"N", num_points}, {"d", d}, {"k", k}, {"beta", beta}, {"c", kC}};
  r.trials = trials;
  r.statistic = static_cast<double>(exceed) / trials;
  r.bound = kC / num_points;
  r.pass = r.statistic <= r.bound;
  json hist = json::object();
  for (const auto& [load, count] : histogram) hist[std::to_string(load)] = count;
  r.extra = {{"threshold", std::isfinite(threshold) ? json(threshold) : json("inf")}, {"histogram", hist}};
  return r;
}

// Per-sample and in-expectation sandwich of V(G) by its decompositions:
//   (a) V(G(pi)) <= V(G) + 1e-9 on every sample;
//   (b) V(G(pi)) >= sum_e alpha_e w_e [e kept] - 1e-9 on every sample;
//   (c) mean_i V(G(pi_i)) >= (1 - eps) V(G) - 3 SE.
// Reads the geometric radius from the instance meta ("delta").
inline VerifierReport verify_vtg_sandwich(const Instance& inst, double eps, int trials, uint64_t seed) {
  if (inst.n_online > 10) throw std::invalid_argument("verify_vtg_sandwich: capped at 10 online nodes");
  if (inst.embeddings.empty()) throw std::invalid_argument("verify_vtg_sandwich: instance has no embeddings");
  if (!inst.meta.contains("delta")) throw std::invalid_argument("verify_vtg_sandwich: meta lacks 'delta'");
  if (trials <= 0) throw std::invalid_argument("verify_vtg_sandwich: need at least one trial");
  const double delta = inst.meta.at("delta").get<double>();
  const int d = inst.embedding_dim();
  const int k = partition_resolution(eps, d, delta);
  const double full = vtg_full(inst);
  const std::vector<EdgeContribution> contrib = edge_contributions(inst);

  int upper_violations = 0, lower_violations = 0;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < trials; ++i) {
    const Partition pi = sample_partition(k, d, Rng::derive(seed, 0x5A4D, i));
    const DecomposedGraph g = decompose(inst, pi);
    const double v = component_vtg(g);
    if (v > full + 1e-9) ++upper_violations;
    std::vector<char> kept(inst.edges.size(), 0);
    for (int e : g.kept_edges) kept[e] = 1;
    double alpha_kept = 0.0;
    for (const auto& c : contrib)
      if (kept[c.edge_index]) alpha_kept += c.alpha * inst.edges[c.edge_index].weight;
    if (v < alpha_kept - 1e-9) ++lower_violations;
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / trials;
  const double var = std::max(0.0, sumsq / trials - mean * mean);
  const double se = std::sqrt(var / trials);
  const double lemma8_bound = (1.0 - eps) * full - 3.0 * se;

  VerifierReport r;
  r.lemma = "vtg-sandwich";
  r.params = {{"eps", eps}, {"delta", delta}, {"d", d}, {"k", k}, {"vtg", full}};
  r.trials = trials;
  r.statistic = mean;
  r.bound = lemma8_bound;
  r.pass = upper_violations == 0 && lower_violations == 0 && mean >= lemma8_bound;
  r.extra = {{"upper_violations", upper_violations},
             {"lower_violations", lower_violations},
             {"std_error", se}};
  return r;
}

}  // namespace obbm

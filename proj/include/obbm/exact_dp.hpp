#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "obbm/instance.hpp"
#include "obbm/policy.hpp"
#include "obbm/rng.hpp"

namespace obbm {

inline constexpr int kDefaultDpLimit = 20;
inline constexpr int kHardDpLimit = 64;

// Memoized evaluation of the value-to-go recurrence
//   V(S, t) = (1 - p_t) V(S, t+1) + p_t max(V(S, t+1), max_{u in N(t) cap S} w_tu + V(S \ u, t+1))
// with V(empty, t) = 0 and V(S, m+1) = 0. Keys are (offline mask, step); the
// table belongs to one evaluation context and is not thread-safe.
class VtgTable {
 public:
  explicit VtgTable(const Instance& inst, int dp_limit = kDefaultDpLimit) : inst_(&inst) {
    if (dp_limit > kHardDpLimit) dp_limit = kHardDpLimit;
    if (inst.n_offline > dp_limit)
      throw std::invalid_argument("VtgTable: instance has " + std::to_string(inst.n_offline) +
                                  " offline nodes, exceeding the DP limit of " + std::to_string(dp_limit));
    if (!inst.finalized()) throw std::logic_error("VtgTable: instance not finalized");
  }

  const Instance& instance() const { return *inst_; }

  // V(S, t); t is 1-based and may be m+1.
  double value(uint64_t available, int t) {
    const int m = inst_->n_online;
    if (t < 1 || t > m + 1) throw std::invalid_argument("VtgTable::value: step out of range");
    if (available == 0 || t == m + 1) return 0.0;
    const Key key{available, t};
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double p = inst_->arrival_probs[t - 1];
    const double skip = value(available, t + 1);
    double best = skip;
    for (const auto& nb : inst_->neighbors(t - 1)) {
      if (!((available >> nb.offline) & 1)) continue;
      const double v = nb.weight + value(available & ~(1ull << nb.offline), t + 1);
      if (v > best) best = v;
    }
    const double result = (1.0 - p) * skip + p * best;
    memo_.emplace(key, result);
    return result;
  }

  // Value of matching the arrived node t to u: w_tu + V(S \ u, t+1).
  double match_value(uint64_t available, int t, int u) {
    if (!((available >> u) & 1)) throw std::invalid_argument("VtgTable::match_value: node not available");
    for (const auto& nb : inst_->neighbors(t - 1))
      if (nb.offline == u) return nb.weight + value(available & ~(1ull << u), t + 1);
    throw std::invalid_argument("VtgTable::match_value: not a neighbor of the arrived node");
  }

 private:
  struct Key {
    uint64_t mask;
    int t;
    bool operator==(const Key& o) const { return mask == o.mask && t == o.t; }
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      return static_cast<size_t>(mix64(k.mask ^ (static_cast<uint64_t>(k.t) * kGolden64)));
    }
  };

  const Instance* inst_;
  std::unordered_map<Key, double, KeyHash> memo_;
};

inline double vtg(const Instance& inst, uint64_t available, int t, int dp_limit = kDefaultDpLimit) {
  VtgTable table(inst, dp_limit);
  return table.value(available, t);
}

// V(G): full availability, first step.
inline double vtg_full(const Instance& inst, int dp_limit = kDefaultDpLimit) {
  const uint64_t all = inst.n_offline == 64 ? ~0ull : (1ull << inst.n_offline) - 1;
  return vtg(inst, all, 1, dp_limit);
}

// The value-optimal action at an arrived state. Ties between matching and
// skipping resolve to Match, and ties among offline nodes to the lowest
// index.
inline Action opt_on_action(const Instance& inst, const MatchingState& state, VtgTable& table) {
  if (!state.arrived) throw std::invalid_argument("opt_on_action: no arrived node at this state");
  const uint64_t avail = state.available.to_mask64();
  const double skip = table.value(avail, state.t + 1);
  double best = -1.0;
  int best_u = kSkipTarget;
  for (const auto& nb : inst.neighbors(state.t - 1)) {
    if (!((avail >> nb.offline) & 1)) continue;
    const double v = nb.weight + table.value(avail & ~(1ull << nb.offline), state.t + 1);
    if (v > best) {
      best = v;
      best_u = nb.offline;
    }
  }
  if (best_u != kSkipTarget && best >= skip) return Action::match(best_u);
  return Action::skip();
}

inline Action opt_on_action(const Instance& inst, const MatchingState& state, int dp_limit = kDefaultDpLimit) {
  VtgTable table(inst, dp_limit);
  return opt_on_action(inst, state, table);
}

// Value-optimal online policy backed by a shared memo table.
class OptOnPolicy : public Policy {
 public:
  explicit OptOnPolicy(const Instance& inst, int dp_limit = kDefaultDpLimit)
      : inst_(&inst), table_(inst, dp_limit) {}

  Action act(const MatchingState& state, Rng&) override { return opt_on_action(*inst_, state, table_); }

  VtgTable& table() { return table_; }

 private:
  const Instance* inst_;
  VtgTable table_;
};

// Test oracle: the same recurrence evaluated by direct recursion over an
// explicit availability vector, no memoization, no bitmasks. Exponential;
// capped at 12 nodes per side.
namespace detail {
inline double brute_force_rec(const Instance& inst, std::vector<char>& avail, int t) {
  const int m = inst.n_online;
  if (t > m) return 0.0;
  bool any = false;
  for (char a : avail)
    if (a) {
      any = true;
      break;
    }
  if (!any) return 0.0;
  const double skip = brute_force_rec(inst, avail, t + 1);
  double best = skip;
  for (const auto& nb : inst.neighbors(t - 1)) {
    if (!avail[nb.offline]) continue;
    avail[nb.offline] = 0;
    const double v = nb.weight + brute_force_rec(inst, avail, t + 1);
    avail[nb.offline] = 1;
    if (v > best) best = v;
  }
  const double p = inst.arrival_probs[t - 1];
  return (1.0 - p) * skip + p * best;
}
}  // namespace detail

inline double brute_force_value(const Instance& inst) {
  if (inst.n_online > 12 || inst.n_offline > 12)
    throw std::invalid_argument("brute_force_value: capped at 12 nodes per side");
  std::vector<char> avail(inst.n_offline, 1);
  return detail::brute_force_rec(inst, avail, 1);
}

// Exact expected matched weight of a policy: enumerates all 2^m arrival
// sequences and weights each deterministic run by its probability. The
// policy's rng is restarted from the same seed for every sequence, so any
// internal randomness is independent of future arrivals.
inline double policy_expected_value(const Instance& inst, Policy& policy, uint64_t rng_seed = 0) {
  const int m = inst.n_online;
  if (m > 12) throw std::invalid_argument("policy_expected_value: capped at 12 online nodes");
  double total = 0.0;
  ArrivalSequence a;
  a.bits.resize(m);
  for (uint64_t bits = 0; bits < (1ull << m); ++bits) {
    for (int t = 0; t < m; ++t) a.bits[t] = (bits >> t) & 1;
    const double pr = arrival_probability(inst, a);
    if (pr == 0.0) continue;
    Rng rng(rng_seed);
    total += pr * run_episode(inst, policy, a, rng).weight;
  }
  return total;
}

// Probability mass the value-optimal policy puts on each edge:
// alpha_e = sum over sequences where e is matched of Pr[a]. The weighted sum
// of contributions reconstructs V(G) exactly.
struct EdgeContribution {
  int edge_index = 0;  // into inst.edges (canonical order)
  double alpha = 0.0;
};

inline std::vector<EdgeContribution> edge_contributions(const Instance& inst, int dp_limit = kDefaultDpLimit) {
  const int m = inst.n_online;
  if (m > 12) throw std::invalid_argument("edge_contributions: capped at 12 online nodes");
  std::unordered_map<uint64_t, int> edge_index;
  for (size_t i = 0; i < inst.edges.size(); ++i)
    edge_index[(static_cast<uint64_t>(inst.edges[i].online) << 32) | static_cast<uint64_t>(inst.edges[i].offline)] =
        static_cast<int>(i);

  std::vector<EdgeContribution> contrib(inst.edges.size());
  for (size_t i = 0; i < contrib.size(); ++i) contrib[i].edge_index = static_cast<int>(i);

  OptOnPolicy policy(inst, dp_limit);
  ArrivalSequence a;
  a.bits.resize(m);
  Rng dummy(0);
  for (uint64_t bits = 0; bits < (1ull << m); ++bits) {
    for (int t = 0; t < m; ++t) a.bits[t] = (bits >> t) & 1;
    const double pr = arrival_probability(inst, a);
    if (pr == 0.0) continue;
    const EpisodeOutcome outcome = run_episode(inst, policy, a, dummy);
    for (const auto& [t, u] : outcome.matched) {
      const auto it = edge_index.find((static_cast<uint64_t>(t) << 32) | static_cast<uint64_t>(u));
      if (it == edge_index.end()) throw std::logic_error("edge_contributions: matched pair is not an edge");
      contrib[it->second].alpha += pr;
    }
  }
  return contrib;
}

}  // namespace obbm

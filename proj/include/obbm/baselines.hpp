#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "obbm/evaluate.hpp"
#include "obbm/generators.hpp"
#include "obbm/instance.hpp"
#include "obbm/lp.hpp"
#include "obbm/policy.hpp"
#include "obbm/rng.hpp"

namespace obbm {

// Match the heaviest available neighbor (lowest offline index on ties); skip
// only when no neighbor is available.
class GreedyPolicy : public Policy {
 public:
  explicit GreedyPolicy(const Instance& inst) : inst_(&inst) {}

  Action act(const MatchingState& state, Rng&) override {
    int best_u = kSkipTarget;
    double best = -1.0;
    for (const auto& nb : inst_->neighbors(state.t - 1)) {
      if (!state.available.test(nb.offline)) continue;
      if (nb.weight > best) {
        best = nb.weight;
        best_u = nb.offline;
      }
    }
    return best_u == kSkipTarget ? Action::skip() : Action::match(best_u);
  }

 private:
  const Instance* inst_;
};

// Greedy with a floor: match the heaviest available neighbor iff its weight
// is at least the threshold.
class GreedyThresholdPolicy : public Policy {
 public:
  GreedyThresholdPolicy(const Instance& inst, double threshold) : inst_(&inst), threshold_(threshold) {}

  Action act(const MatchingState& state, Rng&) override {
    int best_u = kSkipTarget;
    double best = -1.0;
    for (const auto& nb : inst_->neighbors(state.t - 1)) {
      if (!state.available.test(nb.offline)) continue;
      if (nb.weight > best) {
        best = nb.weight;
        best_u = nb.offline;
      }
    }
    if (best_u == kSkipTarget || best < threshold_) return Action::skip();
    return Action::match(best_u);
  }

 private:
  const Instance* inst_;
  double threshold_;
};

class AlwaysSkipPolicy : public Policy {
 public:
  Action act(const MatchingState&, Rng&) override { return Action::skip(); }
};

// Propose-then-drop rounding of the fluid LP: on arrival of t, propose
// offline node u with probability x_tu / p_t (skipping with the leftover
// mass); a proposal to an already-matched node becomes a skip.
class LpRoundPolicy : public Policy {
 public:
  explicit LpRoundPolicy(const Instance& inst) : inst_(&inst), lp_(solve_matching_lp(inst)) {
    edge_x_.assign(inst.n_online, {});
    for (size_t e = 0; e < inst.edges.size(); ++e)
      edge_x_[inst.edges[e].online].push_back({inst.edges[e].offline, lp_.x[e]});
  }

  Action act(const MatchingState& state, Rng& rng) override {
    const double p = inst_->arrival_probs[state.t - 1];
    // A node the policy believes cannot arrive (possible when observing a
    // noisy copy of the true instance) carries no LP mass; skip.
    if (p == 0.0) return Action::skip();
    const double r = rng.real();
    double cum = 0.0;
    for (const auto& [u, x] : edge_x_[state.t - 1]) {
      cum += x / p;
      if (r < cum) return state.available.test(u) ? Action::match(u) : Action::skip();
    }
    return Action::skip();
  }

  const LpSolution& solution() const { return lp_; }

 private:
  const Instance* inst_;
  LpSolution lp_;
  std::vector<std::vector<std::pair<int, double>>> edge_x_;  // per online node, ascending offline
};

struct ThresholdTuneResult {
  double threshold = 0.0;
  std::vector<double> grid;
  std::vector<double> grid_mean_cr;  // aligned with grid; NaN when undefined everywhere
};

inline std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int i = 0; i < 20; ++i) g.push_back(0.05 * i);
  return g;
}

// Grid search for the greedy threshold: mean competitive ratio over a set of
// validation instances, same instances and arrival draws for every grid
// value. Ties prefer the smaller threshold.
inline ThresholdTuneResult tune_threshold(const std::vector<GeneratorConfig>& validation_configs,
                                          int instances_per_config, int ell, uint64_t seed,
                                          const std::vector<double>& grid = default_threshold_grid()) {
  if (validation_configs.empty() || instances_per_config <= 0)
    throw std::invalid_argument("tune_threshold: empty validation set");
  if (grid.empty()) throw std::invalid_argument("tune_threshold: empty grid");

  std::vector<Instance> instances;
  std::vector<uint64_t> cr_seeds;
  for (size_t c = 0; c < validation_configs.size(); ++c)
    for (int i = 0; i < instances_per_config; ++i) {
      instances.push_back(generate_instance(validation_configs[c], Rng::derive(seed, c + 1, i + 1)));
      cr_seeds.push_back(Rng::derive(seed, 0x77, c + 1, i + 1));
    }

  ThresholdTuneResult result;
  result.grid = grid;
  double best = -1.0;
  for (double thr : grid) {
    double sum = 0.0;
    int counted = 0;
    for (size_t i = 0; i < instances.size(); ++i) {
      GreedyThresholdPolicy policy(instances[i], thr);
      const CrStats stats = competitive_ratio(instances[i], policy, ell, cr_seeds[i]);
      if (stats.defined()) {
        sum += stats.mean_cr;
        ++counted;
      }
    }
    const double mean = counted > 0 ? sum / counted : std::numeric_limits<double>::quiet_NaN();
    result.grid_mean_cr.push_back(mean);
    if (counted > 0 && mean > best) {
      best = mean;
      result.threshold = thr;
    }
  }
  if (best < 0.0) throw std::runtime_error("tune_threshold: no validation instance had a defined ratio");
  return result;
}

}  // namespace obbm

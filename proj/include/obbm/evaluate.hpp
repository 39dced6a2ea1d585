#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "obbm/instance.hpp"
#include "obbm/offline_opt.hpp"
#include "obbm/policy.hpp"
#include "obbm/rng.hpp"

namespace obbm {

struct EpisodeResult {
  std::string instance_id;
  std::string policy_id;
  int trial = 0;
  ArrivalSequence arrivals;
  std::vector<std::pair<int, int>> matched;
  double matched_weight = 0.0;
  double offline_opt = 0.0;
};

// One realization end to end: run the policy, then solve the offline optimum
// on the same realized graph. Weights and arrivals always come from the
// clean instance; a policy that observes a noisy copy carries it internally.
inline EpisodeResult simulate_episode(const Instance& inst, Policy& policy, const ArrivalSequence& a, Rng& rng) {
  EpisodeResult res;
  res.arrivals = a;
  EpisodeOutcome outcome = run_episode(inst, policy, a, rng);
  res.matched = std::move(outcome.matched);
  res.matched_weight = outcome.weight;
  res.offline_opt = offline_opt_value(inst, a);
  return res;
}

struct CrStats {
  double mean_cr = std::numeric_limits<double>::quiet_NaN();
  int counted = 0;     // realizations with a positive offline optimum
  int degenerate = 0;  // realizations skipped because the offline optimum was 0
  std::vector<double> trial_cr;  // per counted realization, in trial order

  bool defined() const { return counted > 0; }
};

// Empirical competitive ratio over ell sampled realizations; realizations
// whose offline optimum is zero are excluded from the mean and counted as
// degenerate. Arrival and policy randomness use separate derived streams.
inline CrStats competitive_ratio(const Instance& inst, Policy& policy, int ell, uint64_t seed) {
  if (ell <= 0) throw std::invalid_argument("competitive_ratio: need at least one realization");
  CrStats stats;
  double sum = 0.0;
  for (int j = 0; j < ell; ++j) {
    const ArrivalSequence a = sample_arrivals(inst, Rng::derive(seed, 0xA221, j));
    Rng rng(Rng::derive(seed, 0xB7A9, j));
    const EpisodeResult res = simulate_episode(inst, policy, a, rng);
    if (res.offline_opt > 0.0) {
      const double cr = res.matched_weight / res.offline_opt;
      stats.trial_cr.push_back(cr);
      sum += cr;
      ++stats.counted;
    } else {
      ++stats.degenerate;
    }
  }
  if (stats.counted > 0) stats.mean_cr = sum / stats.counted;
  return stats;
}

}  // namespace obbm

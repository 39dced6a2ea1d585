#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "obbm/instance.hpp"
#include "obbm/rng.hpp"

namespace obbm {

// Online decision rule. A policy is bound to one (observed) instance at
// construction and must be stateless across episodes apart from caches whose
// content is a pure function of the instance; randomness comes only from the
// rng passed to act().
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const MatchingState& state, Rng& rng) = 0;
};

struct EpisodeOutcome {
  double weight = 0.0;
  std::vector<std::pair<int, int>> matched;  // (online, offline), in arrival order
};

// Runs one arrival realization through a policy. Every returned action is
// checked against the instance: a match must name an available neighbor of
// the arrived node. Violations throw, they are never repaired.
inline EpisodeOutcome run_episode(const Instance& inst, Policy& policy, const ArrivalSequence& a, Rng& rng) {
  if (a.bits.size() != static_cast<size_t>(inst.n_online))
    throw std::invalid_argument("run_episode: arrival sequence length mismatch");
  EpisodeOutcome out;
  MatchingState state = MatchingState::initial(inst);
  state.history.reserve(inst.n_online);
  for (int t = 1; t <= inst.n_online; ++t) {
    state.t = t;
    state.arrived = a.bits[t - 1] != 0;
    if (state.arrived) {
      const Action action = policy.act(state, rng);
      if (action.is_match()) {
        const int u = action.offline;
        if (u >= inst.n_offline || !state.available.test(u))
          throw std::runtime_error("policy matched an unavailable offline node " + std::to_string(u) +
                                   " at online step " + std::to_string(t));
        double weight = -1.0;
        for (const auto& nb : inst.neighbors(t - 1))
          if (nb.offline == u) {
            weight = nb.weight;
            break;
          }
        if (weight < 0.0)
          throw std::runtime_error("policy matched a non-neighbor offline node " + std::to_string(u) +
                                   " at online step " + std::to_string(t));
        out.weight += weight;
        out.matched.emplace_back(t - 1, u);
        state.available.reset(u);
      }
    }
    state.history.push_back(a.bits[t - 1]);
  }
  return out;
}

}  // namespace obbm

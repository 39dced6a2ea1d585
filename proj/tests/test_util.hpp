#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "obbm/obbm.hpp"

namespace testutil {

inline obbm::Instance make_instance(int m, int n, const std::vector<obbm::Edge>& edges,
                                    const std::vector<double>& probs) {
  obbm::Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  inst.edges = edges;
  inst.arrival_probs = probs;
  obbm::require_valid(inst);
  inst.finalize();
  return inst;
}

// Random instance with U(0,1) weights and arrival probabilities; each of the
// m*n pairs is an edge with the given density.
inline obbm::Instance random_instance(int m, int n, double density, obbm::Rng& rng) {
  obbm::Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  for (int t = 0; t < m; ++t)
    for (int u = 0; u < n; ++u)
      if (rng.bernoulli(density)) inst.edges.push_back({t, u, rng.real()});
  inst.arrival_probs.resize(m);
  for (double& p : inst.arrival_probs) p = rng.real();
  inst.finalize();
  return inst;
}

// Calls fn(a, Pr[a]) for every arrival sequence with nonzero probability.
inline void for_each_arrival(const obbm::Instance& inst,
                             const std::function<void(const obbm::ArrivalSequence&, double)>& fn) {
  const int m = inst.n_online;
  if (m > 16) throw std::invalid_argument("for_each_arrival: too many online nodes");
  obbm::ArrivalSequence a;
  a.bits.resize(m);
  for (uint64_t bits = 0; bits < (1ull << m); ++bits) {
    for (int t = 0; t < m; ++t) a.bits[t] = (bits >> t) & 1;
    const double pr = obbm::arrival_probability(inst, a);
    if (pr > 0.0) fn(a, pr);
  }
}

inline obbm::ArrivalSequence bits(const std::string& s) {
  obbm::ArrivalSequence a;
  for (char c : s) a.bits.push_back(c == '1');
  return a;
}

inline std::string write_file(const std::string& name, const std::string& content) {
  std::ofstream out(name);
  if (!out) throw std::runtime_error("cannot write test file " + name);
  out << content;
  return name;
}

}  // namespace testutil

#pragma once

#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "obbm/instance.hpp"

namespace obbm {

// The offline graph induced by one arrival realization: rows are the arrived
// online nodes (ascending), columns all offline nodes.
struct RealizedGraph {
  int n_offline = 0;
  std::vector<int> online_ids;
  std::vector<std::vector<double>> weight;   // r x n
  std::vector<std::vector<uint8_t>> is_edge;  // r x n
};

inline RealizedGraph realize(const Instance& inst, const ArrivalSequence& a) {
  if (a.bits.size() != static_cast<size_t>(inst.n_online))
    throw std::invalid_argument("realize: arrival sequence length mismatch");
  RealizedGraph g;
  g.n_offline = inst.n_offline;
  for (int t = 0; t < inst.n_online; ++t)
    if (a.bits[t]) g.online_ids.push_back(t);
  const int r = static_cast<int>(g.online_ids.size());
  g.weight.assign(r, std::vector<double>(inst.n_offline, 0.0));
  g.is_edge.assign(r, std::vector<uint8_t>(inst.n_offline, 0));
  for (int i = 0; i < r; ++i)
    for (const auto& nb : inst.neighbors(g.online_ids[i])) {
      g.weight[i][nb.offline] = nb.weight;
      g.is_edge[i][nb.offline] = 1;
    }
  return g;
}

struct MatchingResult {
  double weight = 0.0;
  std::vector<std::pair<int, int>> edges;  // (online, offline), real edges only
};

// Maximum-weight matching via the Hungarian algorithm with potentials on a
// zero-padded square matrix; with nonnegative weights the optimal assignment
// restricted to real edges is a maximum-weight matching. O(K^3).
inline MatchingResult max_weight_matching(const RealizedGraph& g) {
  const int r = static_cast<int>(g.online_ids.size());
  const int n = g.n_offline;
  const int K = std::max(r, n);
  MatchingResult result;
  if (K == 0) return result;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // cost[i][j] = -weight for real edges, 0 for pads and non-edges (minimize).
  std::vector<std::vector<double>> cost(K + 1, std::vector<double>(K + 1, 0.0));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j)
      if (g.is_edge[i][j]) cost[i + 1][j + 1] = -g.weight[i][j];

  std::vector<double> u(K + 1, 0.0), v(K + 1, 0.0);
  std::vector<int> p(K + 1, 0), way(K + 1, 0);
  for (int i = 1; i <= K; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(K + 1, kInf);
    std::vector<char> used(K + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= K; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= K; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= K; ++j) {
    const int i = p[j];
    if (i >= 1 && i <= r && j <= n && g.is_edge[i - 1][j - 1]) {
      result.weight += g.weight[i - 1][j - 1];
      result.edges.emplace_back(g.online_ids[i - 1], j - 1);
    }
  }
  return result;
}

inline double offline_opt_value(const Instance& inst, const ArrivalSequence& a) {
  return max_weight_matching(realize(inst, a)).weight;
}

}  // namespace obbm

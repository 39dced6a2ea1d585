#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "obbm/instance.hpp"

namespace obbm {

struct SimplexResult {
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
  bool optimal = false;
};

// Dense tableau simplex for max c.x s.t. Ax <= b, x >= 0 with b >= 0 (the
// all-slack basis is feasible, so no phase 1). Dantzig pricing, switching to
// Bland's rule after 10*(rows+cols) degenerate pivots to break cycles.
inline SimplexResult simplex_max(const std::vector<double>& c, const std::vector<std::vector<double>>& rows,
                                 const std::vector<double>& b, double eps = 1e-9) {
  const int m = static_cast<int>(rows.size());
  const int n = static_cast<int>(c.size());
  for (double bi : b)
    if (bi < 0.0) throw std::invalid_argument("simplex_max: requires b >= 0");
  if (static_cast<int>(b.size()) != m) throw std::invalid_argument("simplex_max: b size mismatch");

  const int cols = n + m;  // structural + slack
  std::vector<std::vector<double>> T(m, std::vector<double>(cols + 1, 0.0));
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(rows[i].size()) != n) throw std::invalid_argument("simplex_max: row size mismatch");
    for (int j = 0; j < n; ++j) T[i][j] = rows[i][j];
    T[i][n + i] = 1.0;
    T[i][cols] = b[i];
  }
  std::vector<double> obj(cols + 1, 0.0);  // reduced costs; obj[cols] = -objective value
  for (int j = 0; j < n; ++j) obj[j] = c[j];
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  SimplexResult res;
  const int bland_after = 10 * (m + cols);
  int degenerate_pivots = 0;
  const int max_iter = 10000 + 200 * (m + cols);
  while (res.iterations < max_iter) {
    // entering column
    int enter = -1;
    if (degenerate_pivots <= bland_after) {
      double best = eps;
      for (int j = 0; j < cols; ++j)
        if (obj[j] > best) {
          best = obj[j];
          enter = j;
        }
    } else {
      for (int j = 0; j < cols; ++j)
        if (obj[j] > eps) {
          enter = j;
          break;
        }
    }
    if (enter < 0) {
      res.optimal = true;
      break;
    }
    // ratio test; ties to the lowest basis index (anti-cycling)
    int leave = -1;
    double best_ratio = 0.0;
    for (int i = 0; i < m; ++i) {
      if (T[i][enter] <= eps) continue;
      const double ratio = T[i][cols] / T[i][enter];
      if (leave < 0 || ratio < best_ratio - eps ||
          (ratio < best_ratio + eps && basis[i] < basis[leave])) {
        leave = i;
        best_ratio = ratio;
      }
    }
    if (leave < 0) break;  // unbounded; cannot happen for bounded feasible sets
    if (best_ratio <= eps) ++degenerate_pivots;

    const double pivot = T[leave][enter];
    for (int j = 0; j <= cols; ++j) T[leave][j] /= pivot;
    for (int i = 0; i < m; ++i) {
      if (i == leave || T[i][enter] == 0.0) continue;
      const double f = T[i][enter];
      for (int j = 0; j <= cols; ++j) T[i][j] -= f * T[leave][j];
    }
    if (obj[enter] != 0.0) {
      const double f = obj[enter];
      for (int j = 0; j <= cols; ++j) obj[j] -= f * T[leave][j];
    }
    basis[leave] = enter;
    ++res.iterations;
  }

  res.x.assign(n, 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) res.x[basis[i]] = T[i][cols];
  res.objective = -obj[cols];
  return res;
}

struct LpSolution {
  std::vector<double> x;  // one value per instance edge, canonical order
  double objective = 0.0;
};

// Fluid relaxation of the matching problem:
//   max sum_e w_e x_e  s.t.  sum_{u} x_tu <= p_t  (each online t)
//                            sum_{t} x_tu <= 1    (each offline u)
//                            x >= 0.
// Feasibility of the returned point is checked and a violation throws.
inline LpSolution solve_matching_lp(const Instance& inst) {
  const int m = inst.n_online, n = inst.n_offline;
  const int ne = static_cast<int>(inst.edges.size());
  std::vector<double> c(ne);
  std::vector<std::vector<double>> rows(m + n, std::vector<double>(ne, 0.0));
  std::vector<double> b(m + n, 0.0);
  for (int e = 0; e < ne; ++e) {
    c[e] = inst.edges[e].weight;
    rows[inst.edges[e].online][e] = 1.0;
    rows[m + inst.edges[e].offline][e] = 1.0;
  }
  for (int t = 0; t < m; ++t) b[t] = inst.arrival_probs[t];
  for (int u = 0; u < n; ++u) b[m + u] = 1.0;

  const SimplexResult sr = simplex_max(c, rows, b);
  if (!sr.optimal) throw std::runtime_error("solve_matching_lp: simplex did not reach optimality");

  // invariant checks on the returned point
  std::vector<double> online_sum(m, 0.0), offline_sum(n, 0.0);
  for (int e = 0; e < ne; ++e) {
    if (sr.x[e] < -1e-8) throw std::logic_error("solve_matching_lp: negative coordinate");
    online_sum[inst.edges[e].online] += sr.x[e];
    offline_sum[inst.edges[e].offline] += sr.x[e];
  }
  for (int t = 0; t < m; ++t)
    if (online_sum[t] > inst.arrival_probs[t] + 1e-8)
      throw std::logic_error("solve_matching_lp: arrival constraint violated");
  for (int u = 0; u < n; ++u)
    if (offline_sum[u] > 1.0 + 1e-8) throw std::logic_error("solve_matching_lp: capacity constraint violated");

  LpSolution sol;
  sol.x = sr.x;
  for (double& xi : sol.x)
    if (xi < 0.0) xi = 0.0;
  sol.objective = sr.objective;
  return sol;
}

}  // namespace obbm

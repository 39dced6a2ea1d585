#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "obbm/instance.hpp"
#include "obbm/rng.hpp"

namespace obbm {

// Density-bounded sampling distribution over [0,1]^d: either uniform (density
// bound 1) or a mixture of axis-aligned uniform boxes. A zero-volume box is a
// point mass (density bound infinite) and only useful for negative tests.
struct SmoothSpec {
  struct Box {
    std::vector<double> lo, hi;
    double weight = 1.0;
  };
  std::vector<Box> boxes;  // empty means uniform over the whole cube

  static SmoothSpec uniform() { return {}; }

  static SmoothSpec box(std::vector<double> lo, std::vector<double> hi) {
    SmoothSpec s;
    s.boxes.push_back({std::move(lo), std::move(hi), 1.0});
    return s;
  }

  static SmoothSpec point_mass(std::vector<double> at) {
    return box(at, at);
  }

  void validate(int d) const {
    double total = 0.0;
    for (const Box& b : boxes) {
      if (static_cast<int>(b.lo.size()) != d || static_cast<int>(b.hi.size()) != d)
        throw std::invalid_argument("SmoothSpec: box dimension mismatch");
      for (int i = 0; i < d; ++i) {
        if (b.lo[i] < 0.0 || b.hi[i] > 1.0 || b.lo[i] > b.hi[i])
          throw std::invalid_argument("SmoothSpec: box outside [0,1]^d");
      }
      if (!(b.weight > 0.0)) throw std::invalid_argument("SmoothSpec: box weight must be positive");
      total += b.weight;
    }
    if (!boxes.empty() && !(total > 0.0)) throw std::invalid_argument("SmoothSpec: weights sum to zero");
  }

  // Upper bound on the density: sum of w_i/vol_i (exact when boxes are
  // disjoint). Uniform is exactly 1; a zero-volume box gives infinity.
  double beta(int d) const {
    if (boxes.empty()) return 1.0;
    double total_w = 0.0;
    for (const Box& b : boxes) total_w += b.weight;
    double beta = 0.0;
    for (const Box& b : boxes) {
      double vol = 1.0;
      for (int i = 0; i < d; ++i) vol *= b.hi[i] - b.lo[i];
      if (vol <= 0.0) return std::numeric_limits<double>::infinity();
      beta += (b.weight / total_w) / vol;
    }
    return beta;
  }

  std::vector<double> sample(int d, Rng& rng) const {
    std::vector<double> x(d);
    if (boxes.empty()) {
      for (int i = 0; i < d; ++i) x[i] = rng.real();
      return x;
    }
    double total = 0.0;
    for (const Box& b : boxes) total += b.weight;
    double r = rng.real() * total;
    size_t pick = boxes.size() - 1;
    double cum = 0.0;
    for (size_t i = 0; i < boxes.size(); ++i) {
      cum += boxes[i].weight;
      if (r < cum) {
        pick = i;
        break;
      }
    }
    const Box& b = boxes[pick];
    for (int i = 0; i < d; ++i) x[i] = b.lo[i] + (b.hi[i] - b.lo[i]) * rng.real();
    return x;
  }
};

namespace detail {

// ceil that tolerates float noise just below an integer (0.1*500 style).
inline long long safe_ceil(double x) { return static_cast<long long>(std::ceil(x - 1e-9)); }

inline void draw_weights_and_probs(Instance& inst, Rng& rng) {
  // Draw order: one weight per edge in canonical edge order, then one
  // arrival probability per online node.
  for (Edge& e : inst.edges) e.weight = rng.real();
  inst.arrival_probs.resize(inst.n_online);
  for (double& p : inst.arrival_probs) p = rng.real();
}

inline void check_shape(int m, int n) {
  if (m < 0 || n < 0) throw std::invalid_argument("generator: node counts must be nonnegative");
}

}  // namespace detail

// Erdos-Renyi bipartite: each of the m*n pairs is an edge independently with
// probability p; weights and arrival probabilities U(0,1).
inline Instance gen_er(int m, int n, double p, uint64_t seed) {
  detail::check_shape(m, n);
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("gen_er: p must be in [0,1]");
  Rng rng(seed);
  Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  for (int t = 0; t < m; ++t)
    for (int u = 0; u < n; ++u)
      if (rng.bernoulli(p)) inst.edges.push_back({t, u, 0.0});
  detail::draw_weights_and_probs(inst, rng);
  inst.meta = {{"family", "ER"}, {"m", m}, {"n", n}, {"p", p}, {"seed", seed}};
  inst.finalize();
  return inst;
}

// Preferential attachment: each online node picks b distinct offline nodes,
// sampled without replacement with probability proportional to degree + 1
// (the +1 keeps the first picks well-defined and the process non-degenerate).
// Offline degrees update after each online node completes its picks.
inline Instance gen_ba(int m, int n, int b, uint64_t seed) {
  detail::check_shape(m, n);
  if (b < 0 || b > n) throw std::invalid_argument("gen_ba: need 0 <= b <= n");
  Rng rng(seed);
  Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  std::vector<long long> degree(n, 0);
  std::vector<int> picks;
  std::vector<char> taken(n, 0);
  for (int t = 0; t < m; ++t) {
    picks.clear();
    std::fill(taken.begin(), taken.end(), 0);
    for (int i = 0; i < b; ++i) {
      double total = 0.0;
      for (int u = 0; u < n; ++u)
        if (!taken[u]) total += static_cast<double>(degree[u] + 1);
      double r = rng.real() * total;
      int chosen = -1;
      double cum = 0.0;
      for (int u = 0; u < n; ++u) {
        if (taken[u]) continue;
        cum += static_cast<double>(degree[u] + 1);
        if (r < cum) {
          chosen = u;
          break;
        }
      }
      if (chosen < 0) {  // float edge: fall back to the last free node
        for (int u = n - 1; u >= 0; --u)
          if (!taken[u]) {
            chosen = u;
            break;
          }
      }
      taken[chosen] = 1;
      picks.push_back(chosen);
    }
    std::sort(picks.begin(), picks.end());
    for (int u : picks) {
      inst.edges.push_back({t, u, 0.0});
      ++degree[u];
    }
  }
  detail::draw_weights_and_probs(inst, rng);
  inst.meta = {{"family", "BA"}, {"m", m}, {"n", n}, {"b", b}, {"seed", seed}};
  inst.finalize();
  return inst;
}

// Geometric: all m+n nodes get positions in [0,1]^2, candidate weights are
// 1 - dist_2/sqrt(2), and the ceil(q*m*n) heaviest pairs become edges.
// Positions are stored as node embeddings (online rows first).
inline Instance gen_geom(int m, int n, double q, uint64_t seed) {
  detail::check_shape(m, n);
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("gen_geom: q must be in (0,1]");
  Rng rng(seed);
  Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  inst.embeddings.resize(m + n);
  for (auto& row : inst.embeddings) row = {rng.real(), rng.real()};

  struct Candidate {
    int online, offline;
    double weight;
  };
  std::vector<Candidate> cand;
  cand.reserve(static_cast<size_t>(m) * n);
  const double root2 = std::sqrt(2.0);
  for (int t = 0; t < m; ++t)
    for (int u = 0; u < n; ++u) {
      const auto& a = inst.embeddings[t];
      const auto& b = inst.embeddings[m + u];
      const double dist = std::hypot(a[0] - b[0], a[1] - b[1]);
      cand.push_back({t, u, 1.0 - dist / root2});
    }
  const long long keep = std::min<long long>(detail::safe_ceil(q * m * n), cand.size());
  std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.online != b.online ? a.online < b.online : a.offline < b.offline;
  });
  for (long long i = 0; i < keep; ++i) inst.edges.push_back({cand[i].online, cand[i].offline, cand[i].weight});

  inst.arrival_probs.resize(m);
  for (double& p : inst.arrival_probs) p = rng.real();
  inst.meta = {{"family", "GEOM"}, {"m", m}, {"n", n}, {"q", q}, {"seed", seed}};
  inst.finalize();
  return inst;
}

// Random geometric graph used by the locality analysis: embeddings drawn from
// a density-bounded spec over [0,1]^d, edge iff l-infinity distance <= delta,
// weights and arrival probabilities U(0,1). Embeddings are stored.
inline Instance gen_brgg_theory(int m, int n, int d, double delta, const SmoothSpec& spec, uint64_t seed) {
  detail::check_shape(m, n);
  if (d < 1) throw std::invalid_argument("gen_brgg_theory: dimension must be >= 1");
  if (!(delta > 0.0)) throw std::invalid_argument("gen_brgg_theory: delta must be positive");
  spec.validate(d);
  Rng rng(seed);
  Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  inst.embeddings.resize(m + n);
  for (auto& row : inst.embeddings) row = spec.sample(d, rng);
  for (int t = 0; t < m; ++t)
    for (int u = 0; u < n; ++u) {
      double linf = 0.0;
      for (int i = 0; i < d; ++i) linf = std::max(linf, std::abs(inst.embeddings[t][i] - inst.embeddings[m + u][i]));
      if (linf <= delta) inst.edges.push_back({t, u, 0.0});
    }
  detail::draw_weights_and_probs(inst, rng);
  inst.meta = {{"family", "BRGG_THEORY"}, {"m", m},     {"n", n},
               {"d", d},                  {"delta", delta}, {"beta", spec.beta(d)},
               {"seed", seed}};
  inst.finalize();
  return inst;
}

// ---------------------------------------------------------------------------
// File-backed families.

struct RoadGraph {
  std::vector<std::string> ids;
  std::map<std::pair<std::string, std::string>, double> minutes;  // directed; absent = unreachable
};

// Format: a node section headed `id` (one id per line) followed by an edge
// section headed `from_id,to_id,minutes`.
inline RoadGraph parse_road_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open road graph file: " + path);
  RoadGraph g;
  std::string line;
  int lineno = 0;
  enum { kExpectIdHeader, kNodes, kEdges } mode = kExpectIdHeader;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (mode == kExpectIdHeader) {
      if (line != "id") fail("expected header 'id'");
      mode = kNodes;
      continue;
    }
    if (mode == kNodes) {
      if (line == "from_id,to_id,minutes") {
        mode = kEdges;
        continue;
      }
      if (line.find(',') != std::string::npos) fail("expected node id or edge header");
      g.ids.push_back(line);
      continue;
    }
    std::stringstream ss(line);
    std::string from, to, min_str;
    if (!std::getline(ss, from, ',') || !std::getline(ss, to, ',') || !std::getline(ss, min_str))
      fail("expected from_id,to_id,minutes");
    double minutes;
    try {
      size_t pos = 0;
      minutes = std::stod(min_str, &pos);
      if (pos != min_str.size()) throw std::invalid_argument("");
    } catch (...) {
      fail("malformed minutes value '" + min_str + "'");
    }
    if (!std::isfinite(minutes) || minutes < 0.0) fail("minutes must be nonnegative");
    if (!g.minutes.emplace(std::make_pair(from, to), minutes).second) fail("duplicate pair " + from + "," + to);
  }
  if (mode == kExpectIdHeader) throw std::runtime_error(path + ": empty road graph file");
  return g;
}

// Rideshare: sample n driver then m rider intersections uniformly without
// replacement; edge iff drive time driver->rider <= threshold, with weight
// (threshold - time)/threshold (a time exactly at the threshold keeps the
// edge at weight 0). Weights come from the road graph; probabilities U(0,1).
inline Instance gen_rideshare(const std::string& road_file, int m, int n, double threshold_minutes, uint64_t seed) {
  detail::check_shape(m, n);
  if (!(threshold_minutes > 0.0)) throw std::invalid_argument("gen_rideshare: threshold must be positive");
  const RoadGraph g = parse_road_graph(road_file);
  if (static_cast<size_t>(m) + static_cast<size_t>(n) > g.ids.size())
    throw std::invalid_argument("gen_rideshare: road graph has fewer than m+n intersections");
  Rng rng(seed);
  std::vector<std::string> pool = g.ids;
  std::vector<std::string> drivers, riders;
  for (int i = 0; i < n; ++i) {
    const size_t j = rng.below(pool.size());
    drivers.push_back(pool[j]);
    pool.erase(pool.begin() + j);
  }
  for (int i = 0; i < m; ++i) {
    const size_t j = rng.below(pool.size());
    riders.push_back(pool[j]);
    pool.erase(pool.begin() + j);
  }
  Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  for (int t = 0; t < m; ++t)
    for (int u = 0; u < n; ++u) {
      const auto it = g.minutes.find({drivers[u], riders[t]});
      if (it == g.minutes.end() || it->second > threshold_minutes) continue;
      inst.edges.push_back({t, u, (threshold_minutes - it->second) / threshold_minutes});
    }
  inst.arrival_probs.resize(m);
  for (double& p : inst.arrival_probs) p = rng.real();
  inst.meta = {{"family", "RIDESHARE"},
               {"m", m},
               {"n", n},
               {"threshold_minutes", threshold_minutes},
               {"drivers", drivers},
               {"riders", riders},
               {"seed", seed}};
  inst.finalize();
  return inst;
}

struct BaseGraph {
  std::vector<std::string> workers, tasks;  // distinct ids, sorted
  std::map<std::pair<std::string, std::string>, double> payoff;
  double max_payoff = 0.0;
};

// Format: CSV with header `worker_id,task_id,payoff`.
inline BaseGraph parse_base_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open base graph file: " + path);
  BaseGraph g;
  std::string line;
  int lineno = 0;
  std::set<std::string> workers, tasks;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + what);
  };
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "worker_id,task_id,payoff") fail("expected header 'worker_id,task_id,payoff'");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string w, t, pay_str;
    if (!std::getline(ss, w, ',') || !std::getline(ss, t, ',') || !std::getline(ss, pay_str))
      fail("expected worker_id,task_id,payoff");
    double pay;
    try {
      size_t pos = 0;
      pay = std::stod(pay_str, &pos);
      if (pos != pay_str.size()) throw std::invalid_argument("");
    } catch (...) {
      fail("malformed payoff value '" + pay_str + "'");
    }
    if (!std::isfinite(pay) || pay < 0.0) fail("payoff must be nonnegative");
    if (!g.payoff.emplace(std::make_pair(w, t), pay).second) fail("duplicate pair " + w + "," + t);
    workers.insert(w);
    tasks.insert(t);
    g.max_payoff = std::max(g.max_payoff, pay);
  }
  if (!header_seen) throw std::runtime_error(path + ": empty base graph file");
  g.workers.assign(workers.begin(), workers.end());
  g.tasks.assign(tasks.begin(), tasks.end());
  return g;
}

// Crowdsourcing-style subsample: n workers (offline) and m tasks (online)
// drawn uniformly without replacement; induced edges keep their payoffs
// rescaled by the base graph's global maximum. Probabilities U(0,1).
inline Instance gen_basegraph(const std::string& base_file, int m, int n, uint64_t seed) {
  detail::check_shape(m, n);
  const BaseGraph g = parse_base_graph(base_file);
  if (static_cast<size_t>(n) > g.workers.size() || static_cast<size_t>(m) > g.tasks.size())
    throw std::invalid_argument("gen_basegraph: base graph has too few workers or tasks");
  Rng rng(seed);
  std::vector<std::string> wpool = g.workers, tpool = g.tasks;
  std::vector<std::string> workers, tasks;
  for (int i = 0; i < n; ++i) {
    const size_t j = rng.below(wpool.size());
    workers.push_back(wpool[j]);
    wpool.erase(wpool.begin() + j);
  }
  for (int i = 0; i < m; ++i) {
    const size_t j = rng.below(tpool.size());
    tasks.push_back(tpool[j]);
    tpool.erase(tpool.begin() + j);
  }
  Instance inst;
  inst.n_online = m;
  inst.n_offline = n;
  for (int t = 0; t < m; ++t)
    for (int u = 0; u < n; ++u) {
      const auto it = g.payoff.find({workers[u], tasks[t]});
      if (it == g.payoff.end()) continue;
      inst.edges.push_back({t, u, g.max_payoff > 0.0 ? it->second / g.max_payoff : 0.0});
    }
  inst.arrival_probs.resize(m);
  for (double& p : inst.arrival_probs) p = rng.real();
  inst.meta = {{"family", "BASEGRAPH"}, {"m", m},          {"n", n},
               {"workers", workers},    {"tasks", tasks},  {"seed", seed}};
  inst.finalize();
  return inst;
}

// Perturbs weights (clamped at 0) and arrival probabilities (clamped to
// [0,1]) with independent N(0, rho^2) noise. rho = 0 returns the instance
// untouched. Topology and embeddings are preserved.
inline Instance add_noise(const Instance& inst, double rho, uint64_t seed) {
  if (rho < 0.0) throw std::invalid_argument("add_noise: rho must be nonnegative");
  Instance out = inst;
  if (rho == 0.0) return out;
  Rng rng(seed);
  for (Edge& e : out.edges) e.weight = std::max(0.0, e.weight + rho * rng.normal());
  for (double& p : out.arrival_probs) p = std::clamp(p + rho * rng.normal(), 0.0, 1.0);
  out.meta["noise_rho"] = rho;
  out.finalize();
  return out;
}

// ---------------------------------------------------------------------------
// Config plumbing shared by the CLI and the benchmark grid.

enum class Family { kEr, kBa, kGeom, kBrggTheory, kRideshare, kBasegraph };

struct GeneratorConfig {
  Family family = Family::kEr;
  int m = 0, n = 0;
  double p = 0.0;                   // ER
  int b = 0;                        // BA
  double q = 0.0;                   // GEOM
  int d = 2;                        // BRGG_THEORY
  double delta = 0.0;               // BRGG_THEORY
  SmoothSpec smooth;                // BRGG_THEORY
  std::string file;                 // RIDESHARE / BASEGRAPH
  double threshold_minutes = 15.0;  // RIDESHARE
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::kEr: return "ER";
    case Family::kBa: return "BA";
    case Family::kGeom: return "GEOM";
    case Family::kBrggTheory: return "BRGG_THEORY";
    case Family::kRideshare: return "RIDESHARE";
    case Family::kBasegraph: return "BASEGRAPH";
  }
  return "?";
}

inline Family family_from_name(const std::string& name) {
  if (name == "ER") return Family::kEr;
  if (name == "BA") return Family::kBa;
  if (name == "GEOM") return Family::kGeom;
  if (name == "BRGG_THEORY") return Family::kBrggTheory;
  if (name == "RIDESHARE") return Family::kRideshare;
  if (name == "BASEGRAPH") return Family::kBasegraph;
  throw std::invalid_argument("unknown graph family: " + name);
}

// Compact parameter string for reports ("p=0.25", "b=4", ...).
inline std::string params_string(const GeneratorConfig& cfg) {
  std::ostringstream os;
  switch (cfg.family) {
    case Family::kEr: os << "p=" << cfg.p; break;
    case Family::kBa: os << "b=" << cfg.b; break;
    case Family::kGeom: os << "q=" << cfg.q; break;
    case Family::kBrggTheory: os << "d=" << cfg.d << ";delta=" << cfg.delta; break;
    case Family::kRideshare: os << "threshold=" << cfg.threshold_minutes; break;
    case Family::kBasegraph: os << "-"; break;
  }
  return os.str();
}

inline SmoothSpec smooth_spec_from_json(const json& j) {
  if (j.is_null()) return SmoothSpec::uniform();
  const std::string kind = j.value("kind", "uniform");
  if (kind == "uniform") return SmoothSpec::uniform();
  if (kind == "mixture") {
    SmoothSpec s;
    for (const auto& bj : j.at("boxes")) {
      SmoothSpec::Box b;
      b.lo = bj.at("lo").get<std::vector<double>>();
      b.hi = bj.at("hi").get<std::vector<double>>();
      b.weight = bj.value("weight", 1.0);
      s.boxes.push_back(std::move(b));
    }
    return s;
  }
  throw std::invalid_argument("unknown smooth spec kind: " + kind);
}

inline json smooth_spec_to_json(const SmoothSpec& s) {
  if (s.boxes.empty()) return {{"kind", "uniform"}};
  json boxes = json::array();
  for (const auto& b : s.boxes) boxes.push_back({{"lo", b.lo}, {"hi", b.hi}, {"weight", b.weight}});
  return {{"kind", "mixture"}, {"boxes", boxes}};
}

inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig cfg;
  cfg.family = family_from_name(j.at("family").get<std::string>());
  cfg.m = j.at("m").get<int>();
  cfg.n = j.at("n").get<int>();
  switch (cfg.family) {
    case Family::kEr: cfg.p = j.at("p").get<double>(); break;
    case Family::kBa: cfg.b = j.at("b").get<int>(); break;
    case Family::kGeom: cfg.q = j.at("q").get<double>(); break;
    case Family::kBrggTheory:
      cfg.d = j.at("d").get<int>();
      cfg.delta = j.at("delta").get<double>();
      cfg.smooth = smooth_spec_from_json(j.contains("smooth") ? j.at("smooth") : json());
      break;
    case Family::kRideshare:
      cfg.file = j.at("file").get<std::string>();
      cfg.threshold_minutes = j.value("threshold_minutes", 15.0);
      break;
    case Family::kBasegraph: cfg.file = j.at("file").get<std::string>(); break;
  }
  return cfg;
}

inline json generator_config_to_json(const GeneratorConfig& cfg) {
  json j = {{"family", family_name(cfg.family)}, {"m", cfg.m}, {"n", cfg.n}};
  switch (cfg.family) {
    case Family::kEr: j["p"] = cfg.p; break;
    case Family::kBa: j["b"] = cfg.b; break;
    case Family::kGeom: j["q"] = cfg.q; break;
    case Family::kBrggTheory:
      j["d"] = cfg.d;
      j["delta"] = cfg.delta;
      j["smooth"] = smooth_spec_to_json(cfg.smooth);
      break;
    case Family::kRideshare:
      j["file"] = cfg.file;
      j["threshold_minutes"] = cfg.threshold_minutes;
      break;
    case Family::kBasegraph: j["file"] = cfg.file; break;
  }
  return j;
}

inline Instance generate_instance(const GeneratorConfig& cfg, uint64_t seed) {
  switch (cfg.family) {
    case Family::kEr: return gen_er(cfg.m, cfg.n, cfg.p, seed);
    case Family::kBa: return gen_ba(cfg.m, cfg.n, cfg.b, seed);
    case Family::kGeom: return gen_geom(cfg.m, cfg.n, cfg.q, seed);
    case Family::kBrggTheory: return gen_brgg_theory(cfg.m, cfg.n, cfg.d, cfg.delta, cfg.smooth, seed);
    case Family::kRideshare: return gen_rideshare(cfg.file, cfg.m, cfg.n, cfg.threshold_minutes, seed);
    case Family::kBasegraph: return gen_basegraph(cfg.file, cfg.m, cfg.n, seed);
  }
  throw std::logic_error("generate_instance: unreachable");
}

}  // namespace obbm

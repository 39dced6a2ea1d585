#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "obbm/rng.hpp"

namespace obbm {

using json = nlohmann::json;

inline constexpr int kSkipTarget = -1;

// A single irrevocable decision for the arrived online node: match an offline
// node or skip.
struct Action {
  int offline = kSkipTarget;

  static Action match(int u) { return Action{u}; }
  static Action skip() { return Action{kSkipTarget}; }
  bool is_match() const { return offline >= 0; }

  friend bool operator==(const Action& a, const Action& b) { return a.offline == b.offline; }
};

// Bitmask over offline nodes; word-packed so instances are not capped at 64
// offline nodes (exact DP imposes its own cap separately).
class OfflineSet {
 public:
  OfflineSet() = default;
  explicit OfflineSet(int n) : n_(n), words_((n + 63) / 64, 0) {}

  static OfflineSet full(int n) {
    OfflineSet s(n);
    for (int u = 0; u < n; ++u) s.set(u);
    return s;
  }
  static OfflineSet none(int n) { return OfflineSet(n); }

  int size() const { return n_; }

  bool test(int u) const {
    check(u);
    return (words_[u >> 6] >> (u & 63)) & 1;
  }
  void set(int u) {
    check(u);
    words_[u >> 6] |= 1ull << (u & 63);
  }
  void reset(int u) {
    check(u);
    words_[u >> 6] &= ~(1ull << (u & 63));
  }

  int count() const {
    int c = 0;
    for (uint64_t w : words_) c += __builtin_popcountll(w);
    return c;
  }

  // Single-word view for the exact DP; only valid for n <= 64.
  uint64_t to_mask64() const {
    if (n_ > 64) throw std::logic_error("OfflineSet::to_mask64: more than 64 offline nodes");
    return words_.empty() ? 0 : words_[0];
  }

  static OfflineSet from_mask64(int n, uint64_t mask) {
    if (n > 64) throw std::logic_error("OfflineSet::from_mask64: more than 64 offline nodes");
    OfflineSet s(n);
    if (!s.words_.empty()) s.words_[0] = mask;
    return s;
  }

  friend bool operator==(const OfflineSet& a, const OfflineSet& b) {
    return a.n_ == b.n_ && a.words_ == b.words_;
  }

 private:
  void check(int u) const {
    if (u < 0 || u >= n_) throw std::out_of_range("OfflineSet: offline index out of range");
  }

  int n_ = 0;
  std::vector<uint64_t> words_;
};

struct Edge {
  int online = 0;
  int offline = 0;
  double weight = 0.0;
};

// One online bipartite matching instance: n_offline nodes known up front,
// n_online nodes arriving in order 1..m, node t independently present with
// probability arrival_probs[t-1]. Embeddings, when present, hold one row per
// node: online rows 0..m-1 first, then offline rows m..m+n-1.
struct Instance {
  int n_offline = 0;
  int n_online = 0;
  std::vector<Edge> edges;  // sorted by (online, offline) once finalized
  std::vector<double> arrival_probs;
  std::vector<std::vector<double>> embeddings;
  json meta = json::object();

  struct Neighbor {
    int offline = 0;
    double weight = 0.0;
  };

  // Sorts edges canonically and builds the per-online adjacency index. Must
  // be called after the fields are filled; instances are immutable afterward.
  void finalize() {
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return a.online != b.online ? a.online < b.online : a.offline < b.offline;
    });
    adj_.clear();
    adj_.reserve(edges.size());
    adj_offsets_.assign(n_online + 1, 0);
    for (const Edge& e : edges) adj_offsets_[e.online + 1]++;
    for (int t = 0; t < n_online; ++t) adj_offsets_[t + 1] += adj_offsets_[t];
    for (const Edge& e : edges) adj_.push_back({e.offline, e.weight});
  }

  bool finalized() const { return adj_offsets_.size() == static_cast<size_t>(n_online) + 1; }

  // Neighbors of online node t (0-based), ascending by offline index.
  std::span<const Neighbor> neighbors(int t) const {
    if (!finalized()) throw std::logic_error("Instance: finalize() not called");
    if (t < 0 || t >= n_online) throw std::out_of_range("Instance::neighbors: online index out of range");
    return {adj_.data() + adj_offsets_[t], adj_.data() + adj_offsets_[t + 1]};
  }

  int embedding_dim() const { return embeddings.empty() ? 0 : static_cast<int>(embeddings.front().size()); }

  const std::vector<double>& embedding_online(int t) const { return embeddings.at(t); }
  const std::vector<double>& embedding_offline(int u) const { return embeddings.at(n_online + u); }

 private:
  std::vector<Neighbor> adj_;
  std::vector<int> adj_offsets_;
};

// Decision-time state: S (still-available offline nodes), the current online
// index t (1-based; m+1 once the run is over), whether node t arrived, and
// the arrival bits of steps 1..t-1.
struct MatchingState {
  OfflineSet available;
  int t = 1;
  bool arrived = false;
  std::vector<uint8_t> history;

  static MatchingState initial(const Instance& inst) {
    MatchingState s;
    s.available = OfflineSet::full(inst.n_offline);
    s.t = 1;
    s.arrived = false;
    return s;
  }
};

struct ArrivalSequence {
  std::vector<uint8_t> bits;  // bits[t-1] == 1 iff online node t arrived

  friend bool operator==(const ArrivalSequence& a, const ArrivalSequence& b) { return a.bits == b.bits; }
};

// Structural checks; returns human-readable problems, empty when valid.
inline std::vector<std::string> validate_instance(const Instance& inst) {
  std::vector<std::string> errors;
  auto fail = [&](std::string msg) { errors.push_back(std::move(msg)); };

  if (inst.n_offline < 0 || inst.n_online < 0) fail("negative node count");
  if (static_cast<int>(inst.arrival_probs.size()) != inst.n_online)
    fail("arrival_probs length does not match n_online");
  for (int t = 0; t < static_cast<int>(inst.arrival_probs.size()); ++t) {
    const double p = inst.arrival_probs[t];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      fail("probability out of range at online node " + std::to_string(t));
  }

  std::set<std::pair<int, int>> seen;
  for (const Edge& e : inst.edges) {
    if (e.online < 0 || e.online >= inst.n_online || e.offline < 0 || e.offline >= inst.n_offline) {
      fail("edge endpoint out of range: (" + std::to_string(e.online) + ", " + std::to_string(e.offline) + ")");
      continue;
    }
    if (!seen.insert({e.online, e.offline}).second)
      fail("duplicate edge (" + std::to_string(e.online) + ", " + std::to_string(e.offline) + ")");
    if (!std::isfinite(e.weight) || e.weight < 0.0)
      fail("negative or non-finite weight on edge (" + std::to_string(e.online) + ", " +
           std::to_string(e.offline) + ")");
  }

  if (!inst.embeddings.empty()) {
    const size_t total = static_cast<size_t>(inst.n_online) + static_cast<size_t>(inst.n_offline);
    if (inst.embeddings.size() != total) {
      fail("embeddings must have one row per node");
    } else {
      const size_t d = inst.embeddings.front().size();
      if (d == 0) fail("embedding dimension must be positive");
      for (size_t i = 0; i < inst.embeddings.size(); ++i) {
        if (inst.embeddings[i].size() != d) {
          fail("embedding rows have inconsistent dimension");
          break;
        }
        for (double x : inst.embeddings[i])
          if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
            fail("embedding coordinate outside [0,1] at node " + std::to_string(i));
            break;
          }
      }
    }
  }
  return errors;
}

inline void require_valid(const Instance& inst) {
  const auto errors = validate_instance(inst);
  if (!errors.empty()) {
    std::string msg = "invalid instance:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
}

// One independent Bernoulli draw per online node.
inline ArrivalSequence sample_arrivals(const Instance& inst, uint64_t seed) {
  Rng rng(seed);
  ArrivalSequence a;
  a.bits.resize(inst.n_online);
  for (int t = 0; t < inst.n_online; ++t) a.bits[t] = rng.bernoulli(inst.arrival_probs[t]) ? 1 : 0;
  return a;
}

// Pr[a] = prod_t (p_t if a_t else 1 - p_t).
inline double arrival_probability(const Instance& inst, const ArrivalSequence& a) {
  if (a.bits.size() != static_cast<size_t>(inst.n_online))
    throw std::invalid_argument("arrival_probability: sequence length mismatch");
  double pr = 1.0;
  for (int t = 0; t < inst.n_online; ++t) {
    const double p = inst.arrival_probs[t];
    pr *= a.bits[t] ? p : 1.0 - p;
  }
  return pr;
}

inline json instance_to_json(const Instance& inst) {
  json j;
  j["n_offline"] = inst.n_offline;
  j["n_online"] = inst.n_online;
  json edges = json::array();
  for (const Edge& e : inst.edges) edges.push_back(json::array({e.online, e.offline, e.weight}));
  j["edges"] = std::move(edges);
  j["arrival_probs"] = inst.arrival_probs;
  if (!inst.embeddings.empty()) j["embeddings"] = inst.embeddings;
  j["meta"] = inst.meta;
  return j;
}

inline Instance instance_from_json(const json& j) {
  Instance inst;
  inst.n_offline = j.at("n_offline").get<int>();
  inst.n_online = j.at("n_online").get<int>();
  for (const auto& row : j.at("edges")) {
    if (!row.is_array() || row.size() != 3) throw std::invalid_argument("instance edges: expected [online, offline, weight]");
    inst.edges.push_back({row[0].get<int>(), row[1].get<int>(), row[2].get<double>()});
  }
  inst.arrival_probs = j.at("arrival_probs").get<std::vector<double>>();
  if (j.contains("embeddings")) inst.embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
  if (j.contains("meta")) inst.meta = j.at("meta");
  require_valid(inst);
  inst.finalize();
  return inst;
}

inline void save_instance(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << instance_to_json(inst).dump(2) << "\n";
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  json j;
  in >> j;
  return instance_from_json(j);
}

}  // namespace obbm

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "obbm/baselines.hpp"
#include "obbm/evaluate.hpp"
#include "obbm/exact_dp.hpp"
#include "obbm/generators.hpp"
#include "obbm/instance.hpp"
#include "obbm/neural.hpp"
#include "obbm/policy.hpp"
#include "obbm/rng.hpp"

namespace obbm {

// Shortest lossless formatting for CSV cells.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Instance-level policy selection.

inline std::array<double, 6> meta_features(const Instance& inst) {
  const double m = inst.n_online, n = inst.n_offline;
  const double pairs = m * n;
  double mean_w = 0.0;
  for (const Edge& e : inst.edges) mean_w += e.weight;
  if (!inst.edges.empty()) mean_w /= static_cast<double>(inst.edges.size());
  return {1.0, m, n, n > 0 ? m / n : 0.0, pairs > 0 ? inst.edges.size() / pairs : 0.0, mean_w};
}

// Chooses among candidate policies once per instance. The threshold rule
// picks candidate 1 (the online-heavy specialist) iff m/n exceeds the ratio
// threshold; the regressor scores each candidate's predicted competitive
// ratio from instance features and takes the argmax (lowest index on ties).
struct MetaSelector {
  enum class Kind { kThreshold, kRegressor };
  Kind kind = Kind::kThreshold;
  double ratio_threshold = 1.5;
  std::vector<std::array<double, 6>> weights;  // regressor: one row per candidate
};

inline int meta_select(const MetaSelector& sel, const Instance& inst, int candidates) {
  if (candidates < 1) throw std::invalid_argument("meta_select: no candidates");
  if (sel.kind == MetaSelector::Kind::kThreshold) {
    if (candidates < 2) throw std::invalid_argument("meta_select: threshold rule needs two candidates");
    const double ratio = inst.n_offline > 0 ? static_cast<double>(inst.n_online) / inst.n_offline : 0.0;
    return ratio > sel.ratio_threshold ? 1 : 0;
  }
  if (static_cast<int>(sel.weights.size()) != candidates)
    throw std::invalid_argument("meta_select: regressor weight rows do not match candidates");
  const std::array<double, 6> f = meta_features(inst);
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < candidates; ++c) {
    double score = 0.0;
    for (int i = 0; i < 6; ++i) score += sel.weights[c][i] * f[i];
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

inline Action meta_action(const MetaSelector& sel, const Instance& inst, const MatchingState& state,
                          const std::vector<std::shared_ptr<const MpnnModel>>& models) {
  const int pick = meta_select(sel, inst, static_cast<int>(models.size()));
  return neural_action(*models[pick], inst, state);
}

// Least squares fit of cr ~ features with a tiny ridge term for stability.
inline std::array<double, 6> fit_cr_regressor(const std::vector<std::array<double, 6>>& features,
                                              const std::vector<double>& cr) {
  if (features.size() != cr.size() || features.empty())
    throw std::invalid_argument("fit_cr_regressor: feature/target size mismatch");
  std::array<std::array<double, 6>, 6> xtx{};
  std::array<double, 6> xty{};
  for (size_t r = 0; r < features.size(); ++r) {
    for (int i = 0; i < 6; ++i) {
      xty[i] += features[r][i] * cr[r];
      for (int j = 0; j < 6; ++j) xtx[i][j] += features[r][i] * features[r][j];
    }
  }
  for (int i = 0; i < 6; ++i) xtx[i][i] += 1e-9;
  // Gaussian elimination with partial pivoting
  std::array<std::array<double, 7>, 6> aug{};
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) aug[i][j] = xtx[i][j];
    aug[i][6] = xty[i];
  }
  for (int col = 0; col < 6; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 6; ++r)
      if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
    std::swap(aug[col], aug[pivot]);
    if (aug[col][col] == 0.0) throw std::runtime_error("fit_cr_regressor: singular normal equations");
    for (int r = 0; r < 6; ++r) {
      if (r == col) continue;
      const double f = aug[r][col] / aug[col][col];
      for (int j = col; j < 7; ++j) aug[r][j] -= f * aug[col][j];
    }
  }
  std::array<double, 6> w{};
  for (int i = 0; i < 6; ++i) w[i] = aug[i][6] / aug[i][i];
  return w;
}

class MetaPolicy : public Policy {
 public:
  MetaPolicy(const Instance& inst, MetaSelector sel, std::vector<std::shared_ptr<const MpnnModel>> models)
      : models_(std::move(models)) {
    const int pick = meta_select(sel, inst, static_cast<int>(models_.size()));
    inner_ = std::make_unique<NeuralPolicy>(inst, *models_[pick]);
  }

  Action act(const MatchingState& state, Rng& rng) override { return inner_->act(state, rng); }

 private:
  std::vector<std::shared_ptr<const MpnnModel>> models_;
  std::unique_ptr<NeuralPolicy> inner_;
};

// ---------------------------------------------------------------------------
// Policy registry.

struct PolicySpec {
  std::string name;   // greedy | greedy-t | lp-round | opt-on | neural | meta | always-skip
  std::string label;  // CSV value; defaults to name
  double threshold = 0.0;
  int dp_limit = kDefaultDpLimit;
  std::vector<std::shared_ptr<const MpnnModel>> models;
  MetaSelector selector;

  const std::string& csv_label() const { return label.empty() ? name : label; }
};

inline std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const Instance& observed) {
  if (spec.name == "greedy") return std::make_unique<GreedyPolicy>(observed);
  if (spec.name == "greedy-t") return std::make_unique<GreedyThresholdPolicy>(observed, spec.threshold);
  if (spec.name == "lp-round") return std::make_unique<LpRoundPolicy>(observed);
  if (spec.name == "opt-on") return std::make_unique<OptOnPolicy>(observed, spec.dp_limit);
  if (spec.name == "always-skip") return std::make_unique<AlwaysSkipPolicy>();
  if (spec.name == "neural") {
    if (spec.models.size() != 1) throw std::invalid_argument("neural policy needs exactly one model");
    return std::make_unique<NeuralPolicy>(observed, *spec.models.front());
  }
  if (spec.name == "meta") {
    if (spec.models.size() < 2) throw std::invalid_argument("meta policy needs at least two models");
    return std::make_unique<MetaPolicy>(observed, spec.selector, spec.models);
  }
  throw std::invalid_argument("unknown policy: " + spec.name);
}

inline PolicySpec policy_spec_from_json(const json& j) {
  PolicySpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.label = j.value("label", "");
  spec.threshold = j.value("threshold", 0.0);
  spec.dp_limit = j.value("dp_limit", kDefaultDpLimit);
  auto load_into = [&](const std::string& path) {
    spec.models.push_back(std::make_shared<MpnnModel>(load_model(path)));
  };
  if (j.contains("model")) load_into(j.at("model").get<std::string>());
  if (j.contains("models"))
    for (const auto& p : j.at("models")) load_into(p.get<std::string>());
  if (j.contains("selector")) {
    const json& s = j.at("selector");
    const std::string kind = s.value("kind", "threshold");
    if (kind == "threshold") {
      spec.selector.kind = MetaSelector::Kind::kThreshold;
      spec.selector.ratio_threshold = s.value("ratio_threshold", 1.5);
    } else if (kind == "regressor") {
      spec.selector.kind = MetaSelector::Kind::kRegressor;
      for (const auto& row : s.at("weights")) {
        std::array<double, 6> w{};
        if (row.size() != 6) throw std::invalid_argument("meta regressor rows must have 6 weights");
        for (int i = 0; i < 6; ++i) w[i] = row[i].get<double>();
        spec.selector.weights.push_back(w);
      }
    } else {
      throw std::invalid_argument("unknown meta selector kind: " + kind);
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Benchmark grid.

struct BenchConfigEntry {
  std::string id;
  GeneratorConfig gen;
};

struct BenchConfig {
  std::vector<BenchConfigEntry> configs;
  std::vector<PolicySpec> policies;
  int instances_per_config = 500;
  int realizations = 5;
  uint64_t seed = 1;
  double noise_rho = 0.0;
};

inline BenchConfig bench_config_from_json(const json& j) {
  BenchConfig cfg;
  int idx = 0;
  for (const auto& cj : j.at("configs")) {
    BenchConfigEntry entry;
    entry.gen = generator_config_from_json(cj);
    entry.id = cj.value("id", family_name(entry.gen.family) + "_" + std::to_string(idx));
    cfg.configs.push_back(std::move(entry));
    ++idx;
  }
  for (const auto& pj : j.at("policies")) cfg.policies.push_back(policy_spec_from_json(pj));
  cfg.instances_per_config = j.value("instances_per_config", 500);
  cfg.realizations = j.value("realizations", 5);
  cfg.seed = j.value("seed", 1ull);
  cfg.noise_rho = j.value("noise_rho", 0.0);
  if (cfg.configs.empty() || cfg.policies.empty() || cfg.instances_per_config <= 0 || cfg.realizations <= 0)
    throw std::invalid_argument("bench config: empty grid");
  return cfg;
}

struct BenchRow {
  int config_idx = 0;
  int policy_idx = 0;
  uint64_t instance_seed = 0;
  int trial = 0;
  double matched_weight = 0.0;
  double offline_opt = 0.0;
  double cr = 0.0;
  bool cr_defined = false;
};

struct BenchAggregate {
  int config_idx = 0;
  int policy_idx = 0;
  double mean_cr = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> quantiles;  // p10/p25/p50/p75/p90 of per-instance CRs
  int instances = 0;
  int undefined_instances = 0;
};

struct BenchReport {
  BenchConfig cfg;
  std::vector<BenchRow> rows;
  std::vector<BenchAggregate> aggregates;
};

namespace detail {

inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * (sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

// Runs the full grid. Seeds flow run_seed -> per-instance -> per-trial, and
// every arrival stream is shared across policies, so results are paired and
// adding a policy never changes anyone else's numbers. With jobs > 1 the
// instances are processed by a thread pool; rows are emitted in a fixed
// order regardless, so the CSV is byte-identical for any job count.
inline BenchReport run_bench(const BenchConfig& cfg, int jobs = 1) {
  const size_t n_tasks = cfg.configs.size() * static_cast<size_t>(cfg.instances_per_config);
  std::vector<std::vector<BenchRow>> slots(n_tasks);
  std::vector<std::string> errors(n_tasks);

  auto run_task = [&](size_t task) {
    const int config_idx = static_cast<int>(task / cfg.instances_per_config);
    const int inst_idx = static_cast<int>(task % cfg.instances_per_config);
    const uint64_t instance_seed = Rng::derive(cfg.seed, config_idx + 1, inst_idx + 1);
    const Instance clean = generate_instance(cfg.configs[config_idx].gen, instance_seed);
    const Instance observed =
        cfg.noise_rho > 0.0 ? add_noise(clean, cfg.noise_rho, Rng::derive(instance_seed, 0x401)) : Instance(clean);

    std::vector<BenchRow>& rows = slots[task];
    for (size_t p = 0; p < cfg.policies.size(); ++p) {
      const std::unique_ptr<Policy> policy = make_policy(cfg.policies[p], observed);
      for (int j = 0; j < cfg.realizations; ++j) {
        const ArrivalSequence a = sample_arrivals(clean, Rng::derive(instance_seed, 0xA221, j));
        Rng rng(Rng::derive(instance_seed, 0xB7A9, p, j));
        const EpisodeResult res = simulate_episode(clean, *policy, a, rng);
        BenchRow row;
        row.config_idx = config_idx;
        row.policy_idx = static_cast<int>(p);
        row.instance_seed = instance_seed;
        row.trial = j;
        row.matched_weight = res.matched_weight;
        row.offline_opt = res.offline_opt;
        if (res.offline_opt > 0.0) {
          row.cr = res.matched_weight / res.offline_opt;
          row.cr_defined = true;
        }
        rows.push_back(row);
      }
    }
  };

  if (jobs <= 1) {
    for (size_t task = 0; task < n_tasks; ++task) run_task(task);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t task = next.fetch_add(1); task < n_tasks; task = next.fetch_add(1)) {
        try {
          run_task(task);
        } catch (const std::exception& e) {
          errors[task] = e.what();
        }
      }
    };
    std::vector<std::thread> pool;
    const int count = std::min<size_t>(jobs, n_tasks);
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
      if (!err.empty()) throw std::runtime_error("bench task failed: " + err);
  }

  BenchReport report;
  report.cfg = cfg;
  for (auto& rows : slots)
    for (auto& row : rows) report.rows.push_back(row);

  // per (config, policy): aggregate per-instance mean CRs in task order
  for (size_t c = 0; c < cfg.configs.size(); ++c) {
    for (size_t p = 0; p < cfg.policies.size(); ++p) {
      BenchAggregate agg;
      agg.config_idx = static_cast<int>(c);
      agg.policy_idx = static_cast<int>(p);
      std::vector<double> per_instance;
      for (int i = 0; i < cfg.instances_per_config; ++i) {
        const auto& rows = slots[c * cfg.instances_per_config + i];
        double sum = 0.0;
        int counted = 0;
        for (const auto& row : rows) {
          if (row.policy_idx != static_cast<int>(p) || !row.cr_defined) continue;
          sum += row.cr;
          ++counted;
        }
        if (counted > 0)
          per_instance.push_back(sum / counted);
        else
          ++agg.undefined_instances;
      }
      agg.instances = static_cast<int>(per_instance.size());
      if (!per_instance.empty()) {
        double total = 0.0;
        for (double v : per_instance) total += v;
        agg.mean_cr = total / per_instance.size();
        std::sort(per_instance.begin(), per_instance.end());
        for (const auto& [name, q] : std::initializer_list<std::pair<const char*, double>>{
                 {"p10", 0.10}, {"p25", 0.25}, {"p50", 0.50}, {"p75", 0.75}, {"p90", 0.90}})
          agg.quantiles[name] = detail::quantile(per_instance, q);
      }
      report.aggregates.push_back(std::move(agg));
    }
  }
  return report;
}

inline void write_bench_csv(const BenchReport& report, std::ostream& out) {
  out << "config_id,family,params,m,n,policy,instance_seed,trial,matched_weight,offline_opt,cr\n";
  for (const BenchRow& row : report.rows) {
    const BenchConfigEntry& entry = report.cfg.configs[row.config_idx];
    out << entry.id << ',' << family_name(entry.gen.family) << ',' << params_string(entry.gen) << ','
        << entry.gen.m << ',' << entry.gen.n << ',' << report.cfg.policies[row.policy_idx].csv_label() << ','
        << row.instance_seed << ',' << row.trial << ',' << fmt_double(row.matched_weight) << ','
        << fmt_double(row.offline_opt) << ',';
    if (row.cr_defined) out << fmt_double(row.cr);
    out << '\n';
  }
}

inline void write_bench_csv(const BenchReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_bench_csv(report, out);
}

inline json bench_report_json(const BenchReport& report) {
  json results = json::array();
  for (const BenchAggregate& agg : report.aggregates) {
    const BenchConfigEntry& entry = report.cfg.configs[agg.config_idx];
    json r = {{"config_id", entry.id},
              {"family", family_name(entry.gen.family)},
              {"params", params_string(entry.gen)},
              {"m", entry.gen.m},
              {"n", entry.gen.n},
              {"policy", report.cfg.policies[agg.policy_idx].csv_label()},
              {"instances", agg.instances},
              {"undefined_instances", agg.undefined_instances},
              {"realizations", report.cfg.realizations}};
    if (agg.instances > 0) {
      r["mean_cr"] = agg.mean_cr;
      json q = json::object();
      for (const auto& [name, v] : agg.quantiles) q[name] = v;
      r["quantiles"] = q;
    }
    results.push_back(std::move(r));
  }
  return json{{"run",
               {{"seed", report.cfg.seed},
                {"instances_per_config", report.cfg.instances_per_config},
                {"realizations", report.cfg.realizations},
                {"noise_rho", report.cfg.noise_rho}}},
              {"results", results}};
}

// Reruns the grid once per noise level; policies observe the noisy instance
// while arrivals and scoring stay clean. Optional per-level policy overrides
// let a retrained model stand in for the noiseless one.
inline std::vector<std::pair<double, BenchReport>> run_noise_sweep(
    const BenchConfig& base, const std::vector<double>& rhos,
    const std::map<double, std::vector<PolicySpec>>& overrides = {}, int jobs = 1) {
  std::vector<std::pair<double, BenchReport>> out;
  for (double rho : rhos) {
    BenchConfig cfg = base;
    cfg.noise_rho = rho;
    if (const auto it = overrides.find(rho); it != overrides.end()) cfg.policies = it->second;
    out.emplace_back(rho, run_bench(cfg, jobs));
  }
  return out;
}

}  // namespace obbm

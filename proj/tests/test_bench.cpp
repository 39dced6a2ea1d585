#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "test_util.hpp"

using namespace obbm;

namespace {

// Replays the offline optimum of a known arrival sequence; its ratio is one
// on every realization with a positive optimum.
class ReplayPolicy : public Policy {
 public:
  ReplayPolicy(const Instance& inst, const ArrivalSequence& a) {
    plan_.assign(inst.n_online, kSkipTarget);
    for (const auto& [online, offline] : max_weight_matching(realize(inst, a)).edges)
      plan_[online] = offline;
  }
  Action act(const MatchingState& state, Rng&) override {
    const int u = plan_[state.t - 1];
    return u == kSkipTarget ? Action::skip() : Action::match(u);
  }

 private:
  std::vector<int> plan_;
};

BenchConfig small_bench(int instances, int realizations, uint64_t seed) {
  GeneratorConfig gen;
  gen.family = Family::kEr;
  gen.m = 4;
  gen.n = 4;
  gen.p = 0.7;
  BenchConfig cfg;
  cfg.configs.push_back({"er_small", gen});
  cfg.policies.push_back({"greedy"});
  cfg.policies.push_back({"lp-round"});
  cfg.policies.push_back({"always-skip"});
  cfg.instances_per_config = instances;
  cfg.realizations = realizations;
  cfg.seed = seed;
  return cfg;
}

std::string csv_of(const BenchReport& report) {
  std::ostringstream os;
  write_bench_csv(report, os);
  return os.str();
}

}  // namespace

TEST_CASE("episode bookkeeping on a forced two-arrival trace", "[bench]") {
  const Instance inst = testutil::make_instance(2, 1, {{0, 0, 1.0}, {1, 0, 2.0}}, {1.0, 1.0});
  GreedyPolicy greedy(inst);
  Rng rng(1);
  const EpisodeResult res = simulate_episode(inst, greedy, testutil::bits("11"), rng);
  REQUIRE(res.matched_weight == 1.0);  // myopic: grabs the first edge, blocks the second
  REQUIRE(res.offline_opt == 2.0);
  REQUIRE(res.matched == std::vector<std::pair<int, int>>{{0, 0}});
}

TEST_CASE("an empty realization scores zero against a zero optimum", "[bench]") {
  const Instance inst = testutil::make_instance(2, 1, {{0, 0, 1.0}, {1, 0, 2.0}}, {0.5, 0.5});
  GreedyPolicy greedy(inst);
  Rng rng(1);
  const EpisodeResult res = simulate_episode(inst, greedy, testutil::bits("00"), rng);
  REQUIRE(res.matched_weight == 0.0);
  REQUIRE(res.offline_opt == 0.0);
}

TEST_CASE("episode weights average to the enumerated expectation", "[bench]") {
  Rng rng(1401);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance inst = testutil::random_instance(4, 3, 0.7, rng);
    GreedyPolicy greedy(inst);
    double mean = 0.0;
    testutil::for_each_arrival(inst, [&](const ArrivalSequence& a, double pr) {
      Rng episode_rng(1);
      mean += pr * run_episode(inst, greedy, a, episode_rng).weight;
    });
    REQUIRE(mean == Catch::Approx(policy_expected_value(inst, greedy)).epsilon(1e-12).margin(1e-12));
  }
}

TEST_CASE("replaying the offline optimum achieves ratio one", "[bench]") {
  Rng rng(1402);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance inst = testutil::random_instance(5, 4, 0.7, rng);
    const ArrivalSequence a = sample_arrivals(inst, rng.next());
    ReplayPolicy replay(inst, a);
    Rng episode_rng(1);
    const EpisodeResult res = simulate_episode(inst, replay, a, episode_rng);
    REQUIRE(res.matched_weight == Catch::Approx(res.offline_opt).epsilon(1e-12).margin(1e-12));
  }
}

TEST_CASE("never matching yields ratio zero whenever the optimum is positive", "[bench]") {
  const Instance inst = testutil::make_instance(2, 2, {{0, 0, 0.5}, {1, 1, 0.8}}, {1.0, 1.0});
  AlwaysSkipPolicy policy;
  const CrStats stats = competitive_ratio(inst, policy, 16, 3);
  REQUIRE(stats.counted == 16);
  REQUIRE(stats.degenerate == 0);
  REQUIRE(stats.mean_cr == 0.0);
}

TEST_CASE("realizations with a zero optimum are excluded as degenerate", "[bench]") {
  const Instance inst = testutil::make_instance(1, 1, {{0, 0, 1.0}}, {0.0});
  GreedyPolicy greedy(inst);
  const CrStats stats = competitive_ratio(inst, greedy, 8, 4);
  REQUIRE(stats.counted == 0);
  REQUIRE(stats.degenerate == 8);
  REQUIRE_FALSE(stats.defined());
  REQUIRE(std::isnan(stats.mean_cr));

  const Instance sure = testutil::make_instance(1, 1, {{0, 0, 1.0}}, {1.0});
  GreedyPolicy greedy_sure(sure);
  const CrStats ones = competitive_ratio(sure, greedy_sure, 8, 4);
  REQUIRE(ones.counted == 8);
  REQUIRE(ones.mean_cr == 1.0);
}

TEST_CASE("instance features feed the selector in a fixed order", "[bench]") {
  const Instance inst =
      testutil::make_instance(2, 2, {{0, 0, 0.5}, {0, 1, 0.25}, {1, 1, 0.75}}, {0.6, 0.3});
  const std::array<double, 6> f = meta_features(inst);
  REQUIRE(f[0] == 1.0);
  REQUIRE(f[1] == 2.0);
  REQUIRE(f[2] == 2.0);
  REQUIRE(f[3] == 1.0);
  REQUIRE(f[4] == Catch::Approx(0.75));
  REQUIRE(f[5] == Catch::Approx(0.5));
}

TEST_CASE("ratio rule picks the online-heavy candidate above the cutoff", "[bench]") {
  MetaSelector sel;  // threshold rule at 1.5
  const Instance low = testutil::make_instance(6, 10, {{0, 0, 1.0}}, std::vector<double>(6, 0.5));
  const Instance high = testutil::make_instance(45, 16, {{0, 0, 1.0}}, std::vector<double>(45, 0.5));
  REQUIRE(meta_select(sel, low, 2) == 0);
  REQUIRE(meta_select(sel, high, 2) == 1);
  REQUIRE_THROWS_AS(meta_select(sel, low, 1), std::invalid_argument);

  const Instance edge = testutil::make_instance(3, 2, {{0, 0, 1.0}}, std::vector<double>(3, 0.5));
  REQUIRE(meta_select(sel, edge, 2) == 0);  // exactly 1.5 is not above the cutoff
}

TEST_CASE("selection dispatches to the chosen network", "[bench]") {
  const auto model_a = std::make_shared<const MpnnModel>(init_mpnn(6, 2, 2, 71));
  const auto model_b = std::make_shared<const MpnnModel>(init_mpnn(6, 2, 2, 72));
  Rng rng(1403);
  const Instance heavy = testutil::random_instance(6, 3, 0.8, rng);  // ratio 2: candidate 1
  const Instance light = testutil::random_instance(3, 6, 0.8, rng);  // ratio 0.5: candidate 0

  for (const auto& [inst, chosen] :
       std::vector<std::pair<const Instance*, const MpnnModel*>>{{&heavy, model_b.get()},
                                                                 {&light, model_a.get()}}) {
    MetaPolicy meta(*inst, MetaSelector{}, {model_a, model_b});
    NeuralPolicy direct(*inst, *chosen);
    for (int j = 0; j < 5; ++j) {
      const ArrivalSequence a = sample_arrivals(*inst, Rng::derive(88, j));
      Rng r1(1), r2(1);
      REQUIRE(run_episode(*inst, meta, a, r1).matched == run_episode(*inst, direct, a, r2).matched);
    }
  }
}

TEST_CASE("regression recovers exact linear ratio surfaces", "[bench]") {
  Rng rng(1404);
  const std::array<double, 6> truth = {0.9, -0.001, 0.002, -0.05, 0.1, 0.03};
  std::vector<std::array<double, 6>> features;
  std::vector<double> targets;
  for (int i = 0; i < 60; ++i) {
    const int m = 4 + static_cast<int>(rng.below(12));
    const int n = 4 + static_cast<int>(rng.below(12));
    const Instance inst = testutil::random_instance(m, n, 0.3 + 0.6 * rng.real(), rng);
    const std::array<double, 6> f = meta_features(inst);
    double y = 0.0;
    for (int k = 0; k < 6; ++k) y += truth[k] * f[k];
    features.push_back(f);
    targets.push_back(y);
  }
  const std::array<double, 6> fit = fit_cr_regressor(features, targets);
  for (int k = 0; k < 6; ++k) REQUIRE(fit[k] == Catch::Approx(truth[k]).margin(1e-5));
  REQUIRE_THROWS_AS(fit_cr_regressor({}, {}), std::invalid_argument);
}

TEST_CASE("fitted selector mostly agrees with the ratio rule off the crossover band", "[bench]") {
  // Candidate ratios that depend only on the online/offline ratio r:
  // 0.9 - 0.05 r versus 0.8 + 0.03 r, crossing at r = 1.25. The cutoff rule
  // at 1.5 disagrees only inside (1.25, 1.5].
  const auto cr0 = [](double r) { return 0.9 - 0.05 * r; };
  const auto cr1 = [](double r) { return 0.8 + 0.03 * r; };
  const std::vector<std::pair<int, int>> train_sizes = {{10, 6}, {8, 8}, {6, 10}};

  MetaSelector fitted;
  fitted.kind = MetaSelector::Kind::kRegressor;
  {
    std::vector<std::array<double, 6>> features;
    std::vector<double> y0, y1;
    for (const auto& [m, n] : train_sizes)
      for (int i = 0; i < 12; ++i) {
        GeneratorConfig gen;
        gen.family = Family::kEr;
        gen.m = m;
        gen.n = n;
        gen.p = 0.8;
        const Instance inst = generate_instance(gen, Rng::derive(1405, m, n, i));
        features.push_back(meta_features(inst));
        const double r = static_cast<double>(m) / n;
        y0.push_back(cr0(r));
        y1.push_back(cr1(r));
      }
    fitted.weights.push_back(fit_cr_regressor(features, y0));
    fitted.weights.push_back(fit_cr_regressor(features, y1));
  }

  MetaSelector cutoff;  // threshold rule
  int agree = 0, total = 0;
  for (const auto& [m, n] : train_sizes)
    for (int i = 0; i < 10; ++i) {
      GeneratorConfig gen;
      gen.family = Family::kEr;
      gen.m = m;
      gen.n = n;
      gen.p = 0.8;
      const Instance inst = generate_instance(gen, Rng::derive(1406, m, n, i));
      if (meta_select(fitted, inst, 2) == meta_select(cutoff, inst, 2)) ++agree;
      ++total;
    }
  REQUIRE(static_cast<double>(agree) / total >= 0.8);
}

TEST_CASE("policy registry builds each rule and rejects unknown names", "[bench]") {
  Rng rng(1407);
  const Instance inst = testutil::random_instance(3, 3, 0.8, rng);
  REQUIRE(make_policy({"greedy"}, inst) != nullptr);
  REQUIRE(make_policy({"always-skip"}, inst) != nullptr);
  PolicySpec thr{"greedy-t"};
  thr.threshold = 0.5;
  REQUIRE(make_policy(thr, inst) != nullptr);
  REQUIRE_THROWS_AS(make_policy({"nonsense"}, inst), std::invalid_argument);
  REQUIRE_THROWS_AS(make_policy({"neural"}, inst), std::invalid_argument);
  PolicySpec meta{"meta"};
  meta.models.push_back(std::make_shared<const MpnnModel>(init_mpnn(4, 2, 2, 1)));
  REQUIRE_THROWS_AS(make_policy(meta, inst), std::invalid_argument);
}

TEST_CASE("policy specs parse from JSON including selector weights", "[bench]") {
  const json j = {{"name", "greedy-t"}, {"label", "tuned"}, {"threshold", 0.35}};
  const PolicySpec spec = policy_spec_from_json(j);
  REQUIRE(spec.name == "greedy-t");
  REQUIRE(spec.csv_label() == "tuned");
  REQUIRE(spec.threshold == 0.35);
  REQUIRE(PolicySpec{"greedy"}.csv_label() == "greedy");

  const json sel = {{"name", "meta"},
                    {"selector",
                     {{"kind", "regressor"},
                      {"weights", json::array({json::array({1, 0, 0, 0, 0, 0}),
                                               json::array({0, 1, 0, 0, 0, 0})})}}}};
  const PolicySpec meta = policy_spec_from_json(sel);
  REQUIRE(meta.selector.kind == MetaSelector::Kind::kRegressor);
  REQUIRE(meta.selector.weights.size() == 2);
  REQUIRE(meta.selector.weights[0][0] == 1.0);

  const json bad = {{"name", "meta"},
                    {"selector", {{"kind", "regressor"}, {"weights", json::array({json::array({1, 2})})}}}};
  REQUIRE_THROWS_AS(policy_spec_from_json(bad), std::invalid_argument);
  const json unknown = {{"name", "meta"}, {"selector", {{"kind", "oracle"}}}};
  REQUIRE_THROWS_AS(policy_spec_from_json(unknown), std::invalid_argument);
}

TEST_CASE("grid configs parse with defaults and reject empty grids", "[bench]") {
  const json j = {{"configs", json::array({{{"family", "ER"}, {"m", 4}, {"n", 4}, {"p", 0.5}, {"id", "e1"}}})},
                  {"policies", json::array({{{"name", "greedy"}}})}};
  const BenchConfig cfg = bench_config_from_json(j);
  REQUIRE(cfg.configs.size() == 1);
  REQUIRE(cfg.configs[0].id == "e1");
  REQUIRE(cfg.instances_per_config == 500);
  REQUIRE(cfg.realizations == 5);
  REQUIRE(cfg.seed == 1);

  json empty = j;
  empty["policies"] = json::array();
  REQUIRE_THROWS_AS(bench_config_from_json(empty), std::invalid_argument);
}

TEST_CASE("a minimal grid produces exactly one row", "[bench]") {
  BenchConfig cfg = small_bench(1, 1, 42);
  cfg.policies = {{"greedy"}};
  const BenchReport report = run_bench(cfg);
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.rows[0].config_idx == 0);
  REQUIRE(report.rows[0].policy_idx == 0);
  REQUIRE(report.rows[0].trial == 0);
  REQUIRE(report.rows[0].instance_seed == Rng::derive(42, 1, 1));
  REQUIRE(report.aggregates.size() == 1);
}

TEST_CASE("rows appear in instance-major, then policy, then trial order", "[bench]") {
  GeneratorConfig gen;
  gen.family = Family::kEr;
  gen.m = 3;
  gen.n = 3;
  gen.p = 0.8;
  BenchConfig cfg;
  cfg.configs.push_back({"a", gen});
  cfg.configs.push_back({"b", gen});
  cfg.policies = {{"greedy"}, {"always-skip"}};
  cfg.instances_per_config = 2;
  cfg.realizations = 2;
  cfg.seed = 7;
  const BenchReport report = run_bench(cfg);
  REQUIRE(report.rows.size() == 16);

  size_t r = 0;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int p = 0; p < 2; ++p)
        for (int t = 0; t < 2; ++t, ++r) {
          REQUIRE(report.rows[r].config_idx == c);
          REQUIRE(report.rows[r].policy_idx == p);
          REQUIRE(report.rows[r].trial == t);
          REQUIRE(report.rows[r].instance_seed == Rng::derive(7, c + 1, i + 1));
        }
}

TEST_CASE("a grid with no policies yields no rows", "[bench]") {
  BenchConfig cfg = small_bench(2, 2, 1);
  cfg.policies.clear();
  const BenchReport report = run_bench(cfg);
  REQUIRE(report.rows.empty());
  REQUIRE(report.aggregates.empty());
}

TEST_CASE("ratios never exceed one and offline accounting is clean", "[bench]") {
  const BenchReport report = run_bench(small_bench(6, 3, 99));
  for (const BenchRow& row : report.rows) {
    REQUIRE(row.matched_weight <= row.offline_opt + 1e-9);
    if (row.cr_defined) {
      REQUIRE(row.cr <= 1.0 + 1e-9);
      REQUIRE(row.cr >= 0.0);
      REQUIRE(row.cr == Catch::Approx(row.matched_weight / row.offline_opt));
    } else {
      REQUIRE(row.offline_opt == 0.0);
    }
  }
}

TEST_CASE("adding a policy never disturbs existing rows", "[bench]") {
  BenchConfig lone = small_bench(4, 3, 13);
  lone.policies = {{"greedy"}};
  BenchConfig both = small_bench(4, 3, 13);
  both.policies = {{"greedy"}, {"lp-round"}};

  const BenchReport a = run_bench(lone);
  const BenchReport b = run_bench(both);
  std::vector<BenchRow> greedy_rows;
  for (const BenchRow& row : b.rows)
    if (row.policy_idx == 0) greedy_rows.push_back(row);
  REQUIRE(a.rows.size() == greedy_rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    REQUIRE(a.rows[i].matched_weight == greedy_rows[i].matched_weight);
    REQUIRE(a.rows[i].offline_opt == greedy_rows[i].offline_opt);
    REQUIRE(a.rows[i].instance_seed == greedy_rows[i].instance_seed);
  }
}

TEST_CASE("the grid is reproducible and indifferent to the worker count", "[bench]") {
  const BenchConfig cfg = small_bench(6, 2, 2024);
  const std::string serial = csv_of(run_bench(cfg, 1));
  const std::string again = csv_of(run_bench(cfg, 1));
  const std::string pooled = csv_of(run_bench(cfg, 8));
  REQUIRE(serial == again);
  REQUIRE(serial == pooled);
  REQUIRE(serial.rfind("config_id,family,params,m,n,policy,instance_seed,trial,matched_weight,offline_opt,cr\n",
                       0) == 0);
}

TEST_CASE("aggregates summarize per-instance ratios with ordered quantiles", "[bench]") {
  const BenchReport report = run_bench(small_bench(8, 3, 55));
  REQUIRE(report.aggregates.size() == 3);
  for (const BenchAggregate& agg : report.aggregates) {
    REQUIRE(agg.instances + agg.undefined_instances == 8);
    if (agg.instances == 0) continue;
    REQUIRE(std::isfinite(agg.mean_cr));
    const auto& q = agg.quantiles;
    REQUIRE(q.at("p10") <= q.at("p25"));
    REQUIRE(q.at("p25") <= q.at("p50"));
    REQUIRE(q.at("p50") <= q.at("p75"));
    REQUIRE(q.at("p75") <= q.at("p90"));
  }
  const json j = bench_report_json(report);
  REQUIRE(j.at("results").size() == 3);
  REQUIRE(j.at("run").at("seed").get<uint64_t>() == 55);
}

TEST_CASE("noise perturbs only what policies observe", "[bench]") {
  BenchConfig clean = small_bench(4, 3, 31);
  clean.policies = {{"always-skip"}};
  BenchConfig noisy = clean;
  noisy.noise_rho = 0.5;

  const BenchReport a = run_bench(clean);
  const BenchReport b = run_bench(noisy);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    REQUIRE(b.rows[i].matched_weight == 0.0);
    REQUIRE(a.rows[i].offline_opt == b.rows[i].offline_opt);  // scoring stays clean
  }
}

TEST_CASE("a noise sweep at level zero reproduces the plain grid", "[bench]") {
  const BenchConfig base = small_bench(3, 2, 77);
  const auto sweep = run_noise_sweep(base, {0.0, 0.3});
  REQUIRE(sweep.size() == 2);
  REQUIRE(sweep[0].first == 0.0);
  REQUIRE(csv_of(sweep[0].second) == csv_of(run_bench(base)));

  std::map<double, std::vector<PolicySpec>> overrides;
  overrides[0.3] = {PolicySpec{"always-skip"}};
  const auto swapped = run_noise_sweep(base, {0.0, 0.3}, overrides);
  REQUIRE(csv_of(swapped[0].second) == csv_of(sweep[0].second));
  for (const BenchRow& row : swapped[1].second.rows) REQUIRE(row.matched_weight == 0.0);
}

TEST_CASE("numeric cells round-trip through their text form", "[bench]") {
  for (double x : {0.1, 1.0 / 3.0, 2.0, 0.881, 1e-17, 123456.789, 0.9999999999999999}) {
    const std::string s = fmt_double(x);
    REQUIRE(std::strtod(s.c_str(), nullptr) == x);
  }
  REQUIRE(fmt_double(2.0) == "2");
  REQUIRE(fmt_double(0.5) == "0.5");
}

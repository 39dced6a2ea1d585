// Command-line front end: instance generation, exact values, episode
// simulation, benchmark grids, threshold tuning, locality verification,
// training, and policy evaluation. Every command is deterministic given
// --seed; invariant violations exit nonzero.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "obbm/obbm.hpp"

namespace fs = std::filesystem;
using obbm::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

obbm::ArrivalSequence parse_bits(const std::string& s) {
  obbm::ArrivalSequence a;
  for (char c : s) {
    if (c != '0' && c != '1') throw std::runtime_error("arrival string must be over {0,1}");
    a.bits.push_back(c == '1');
  }
  return a;
}

struct PolicyFlags {
  std::string name = "greedy";
  double threshold = 0.0;
  int dp_limit = obbm::kDefaultDpLimit;
  std::vector<std::string> model_paths;
  double ratio_threshold = 1.5;

  obbm::PolicySpec to_spec() const {
    obbm::PolicySpec spec;
    spec.name = name;
    spec.threshold = threshold;
    spec.dp_limit = dp_limit;
    for (const auto& p : model_paths) spec.models.push_back(std::make_shared<obbm::MpnnModel>(obbm::load_model(p)));
    spec.selector.ratio_threshold = ratio_threshold;
    return spec;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--policy", name, "greedy | greedy-t | lp-round | opt-on | neural | meta | always-skip");
    cmd->add_option("--threshold", threshold, "greedy-t weight floor");
    cmd->add_option("--dp-limit", dp_limit, "offline-node cap for exact value computations");
    cmd->add_option("--model", model_paths, "model checkpoint path (repeat for meta candidates)");
    cmd->add_option("--ratio-threshold", ratio_threshold, "meta threshold on m/n");
  }
};

json cr_stats_json(const obbm::CrStats& stats) {
  json j = {{"counted", stats.counted}, {"degenerate", stats.degenerate}};
  if (stats.defined()) j["mean_cr"] = stats.mean_cr;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online bipartite matching toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  uint64_t seed = 1;
  std::string config_path;
  std::string out_path;
  int jobs = 1;
  app.add_option("--seed", seed, "run seed (default 1)");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_path, "output file or directory");
  app.add_option("--jobs", jobs, "worker threads for grid commands");

  // generate ---------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "generate one instance as JSON");
  std::string g_family = "ER";
  int g_m = 10, g_n = 10, g_b = 2, g_d = 2;
  double g_p = 0.5, g_q = 0.25, g_delta = 0.1, g_threshold = 15.0;
  std::string g_file;
  gen->add_option("--family", g_family, "ER | BA | GEOM | BRGG_THEORY | RIDESHARE | BASEGRAPH");
  gen->add_option("--m", g_m, "online nodes");
  gen->add_option("--n", g_n, "offline nodes");
  gen->add_option("--p", g_p, "ER edge probability");
  gen->add_option("--b", g_b, "BA edges per online node");
  gen->add_option("--q", g_q, "GEOM kept fraction");
  gen->add_option("--d", g_d, "BRGG_THEORY dimension");
  gen->add_option("--delta", g_delta, "BRGG_THEORY radius");
  gen->add_option("--file", g_file, "road/base graph CSV for file-backed families");
  gen->add_option("--threshold-minutes", g_threshold, "RIDESHARE time threshold");

  // vtg --------------------------------------------------------------------
  auto* vtg_cmd = app.add_subcommand("vtg", "exact expected value of the optimal online policy");
  std::string v_instance;
  int v_dp_limit = obbm::kDefaultDpLimit;
  vtg_cmd->add_option("--instance", v_instance, "instance JSON file")->required();
  vtg_cmd->add_option("--dp-limit", v_dp_limit, "offline-node cap");

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "run one policy on one realization");
  std::string s_instance, s_arrivals;
  PolicyFlags s_policy;
  sim->add_option("--instance", s_instance, "instance JSON file")->required();
  sim->add_option("--arrivals", s_arrivals, "explicit arrival bits, e.g. 0110 (default: sampled)");
  s_policy.attach(sim);

  // bench ------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "benchmark grid -> results.csv + report.json");

  // tune-threshold ----------------------------------------------------------
  auto* tune = app.add_subcommand("tune-threshold", "grid search for the greedy threshold");

  // verify-locality ----------------------------------------------------------
  auto* verify = app.add_subcommand("verify-locality", "statistical checks of the locality guarantees");

  // train --------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "teacher-forced training of the value network");

  // predict -------------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "per-action value predictions at one state");
  std::string p_instance, p_model, p_history, p_available;
  int p_t = 1;
  predict->add_option("--instance", p_instance, "instance JSON file")->required();
  predict->add_option("--model", p_model, "model checkpoint")->required();
  predict->add_option("--t", p_t, "arrived online step, 1-based");
  predict->add_option("--history", p_history, "arrival bits for steps before t (default none arrived)");
  predict->add_option("--available", p_available, "comma-separated available offline nodes (default all)");

  // eval-policy -----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval-policy", "empirical competitive ratio of one policy");
  std::string e_instance;
  int e_realizations = 5, e_instances = 50;
  PolicyFlags e_policy;
  eval->add_option("--instance", e_instance, "instance JSON file (otherwise --config generator grid)");
  eval->add_option("--realizations", e_realizations, "arrival realizations per instance");
  eval->add_option("--instances", e_instances, "instances per generator config");
  e_policy.attach(eval);

  // meta ---------------------------------------------------------------------
  auto* meta = app.add_subcommand("meta", "fit and inspect the instance-level model selector");

  // noise-sweep ----------------------------------------------------------------
  auto* noise = app.add_subcommand("noise-sweep", "benchmark grid under observation noise");
  std::vector<double> n_rhos;
  noise->add_option("--rhos", n_rhos, "noise levels")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      obbm::GeneratorConfig cfg;
      if (!config_path.empty()) {
        cfg = obbm::generator_config_from_json(read_json_file(config_path));
      } else {
        cfg.family = obbm::family_from_name(g_family);
        cfg.m = g_m;
        cfg.n = g_n;
        cfg.p = g_p;
        cfg.b = g_b;
        cfg.q = g_q;
        cfg.d = g_d;
        cfg.delta = g_delta;
        cfg.file = g_file;
        cfg.threshold_minutes = g_threshold;
      }
      const obbm::Instance inst = obbm::generate_instance(cfg, seed);
      const std::string text = obbm::instance_to_json(inst).dump(2) + "\n";
      if (out_path.empty())
        std::cout << text;
      else
        write_text(out_path, text);
      return 0;
    }

    if (*vtg_cmd) {
      const obbm::Instance inst = obbm::load_instance(v_instance);
      const double value = obbm::vtg_full(inst, v_dp_limit);
      std::cout << json{{"vtg", value}, {"n_offline", inst.n_offline}, {"n_online", inst.n_online}}.dump(2)
                << "\n";
      return 0;
    }

    if (*sim) {
      const obbm::Instance inst = obbm::load_instance(s_instance);
      const obbm::ArrivalSequence a =
          s_arrivals.empty() ? obbm::sample_arrivals(inst, obbm::Rng::derive(seed, 0xA221, 0))
                             : parse_bits(s_arrivals);
      const auto spec = s_policy.to_spec();
      const auto policy = obbm::make_policy(spec, inst);
      obbm::Rng rng(obbm::Rng::derive(seed, 0xB7A9, 0));
      const obbm::EpisodeResult res = obbm::simulate_episode(inst, *policy, a, rng);
      json matched = json::array();
      for (const auto& [t, u] : res.matched) matched.push_back(json::array({t, u}));
      json j = {{"policy", spec.csv_label()},
                {"arrivals", res.arrivals.bits},
                {"matched", matched},
                {"matched_weight", res.matched_weight},
                {"offline_opt", res.offline_opt}};
      if (res.offline_opt > 0.0) j["cr"] = res.matched_weight / res.offline_opt;
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*bench) {
      if (config_path.empty()) throw std::runtime_error("bench requires --config");
      json cj = read_json_file(config_path);
      obbm::BenchConfig cfg = obbm::bench_config_from_json(cj);
      if (app.count("--seed")) cfg.seed = seed;
      const obbm::BenchReport report = obbm::run_bench(cfg, jobs);
      const std::string dir = out_path.empty() ? "." : out_path;
      ensure_dir(dir);
      obbm::write_bench_csv(report, dir + "/results.csv");
      write_text(dir + "/report.json", obbm::bench_report_json(report).dump(2) + "\n");
      std::cout << obbm::bench_report_json(report).dump(2) << "\n";
      return 0;
    }

    if (*tune) {
      if (config_path.empty()) throw std::runtime_error("tune-threshold requires --config");
      const json cj = read_json_file(config_path);
      std::vector<obbm::GeneratorConfig> configs;
      for (const auto& g : cj.at("configs")) configs.push_back(obbm::generator_config_from_json(g));
      std::vector<double> grid = obbm::default_threshold_grid();
      if (cj.contains("grid")) grid = cj.at("grid").get<std::vector<double>>();
      const auto result = obbm::tune_threshold(configs, cj.value("instances_per_config", 20),
                                               cj.value("realizations", 5), seed, grid);
      json out = {{"threshold", result.threshold}, {"grid", result.grid}, {"grid_mean_cr", result.grid_mean_cr}};
      std::cout << out.dump(2) << "\n";
      if (!out_path.empty()) write_text(out_path, out.dump(2) + "\n");
      return 0;
    }

    if (*verify) {
      if (config_path.empty()) throw std::runtime_error("verify-locality requires --config");
      const json cj = read_json_file(config_path);
      json reports = json::array();
      bool all_pass = true;
      int check_idx = 0;
      for (const auto& check : cj.at("checks")) {
        const std::string kind = check.at("kind").get<std::string>();
        const uint64_t check_seed = obbm::Rng::derive(seed, 0xC4EC, check_idx++);
        if (kind == "cut-probability") {
          const auto r = obbm::verify_cut_probability(check.at("delta").get<double>(), check.at("d").get<int>(),
                                                      check.at("eps").get<double>(),
                                                      check.value("trials", 100000), check_seed);
          all_pass = all_pass && r.pass;
          reports.push_back(r.to_json());
        } else if (kind == "max-load") {
          const obbm::SmoothSpec spec =
              obbm::smooth_spec_from_json(check.contains("smooth") ? check.at("smooth") : json());
          const auto r = obbm::verify_max_load(check.at("N").get<int>(), check.at("d").get<int>(),
                                               check.at("k").get<int>(), spec, check.value("trials", 200),
                                               check_seed);
          all_pass = all_pass && r.pass;
          reports.push_back(r.to_json());
        } else if (kind == "sandwich") {
          const obbm::GeneratorConfig gcfg = obbm::generator_config_from_json(check.at("generator"));
          const int instances = check.value("instances", 5);
          for (int i = 0; i < instances; ++i) {
            const obbm::Instance inst = obbm::generate_instance(gcfg, obbm::Rng::derive(check_seed, 0x9A, i));
            const auto r = obbm::verify_vtg_sandwich(inst, check.value("eps", 0.25), check.value("trials", 100),
                                                     obbm::Rng::derive(check_seed, 0x9B, i));
            all_pass = all_pass && r.pass;
            reports.push_back(r.to_json());
          }
        } else {
          throw std::runtime_error("unknown locality check: " + kind);
        }
      }
      const json out = {{"pass", all_pass}, {"reports", reports}};
      std::cout << out.dump(2) << "\n";
      if (!out_path.empty()) write_text(out_path, out.dump(2) + "\n");
      return all_pass ? 0 : 1;
    }

    if (*train_cmd) {
      if (config_path.empty()) throw std::runtime_error("train requires --config");
      const json cj = read_json_file(config_path);
      std::vector<obbm::GeneratorConfig> configs;
      for (const auto& g : cj.at("configs")) configs.push_back(obbm::generator_config_from_json(g));
      const auto samples = obbm::generate_training_set(
          configs, cj.value("count", 2000), obbm::Rng::derive(seed, 0xDA7A),
          cj.value("dp_limit", obbm::kDefaultDpLimit), cj.value("noise_rho", 0.0));
      obbm::MpnnModel model =
          obbm::init_mpnn(cj.value("hidden", 32), cj.value("mp_layers", 2), cj.value("mlp_layers", 2),
                          obbm::Rng::derive(seed, 0x1217));
      obbm::TrainConfig tc;
      tc.lr = cj.value("lr", 1e-3);
      tc.batch_size = cj.value("batch_size", 32);
      tc.epochs = cj.value("epochs", 64);
      tc.seed = obbm::Rng::derive(seed, 0x7A1);
      const obbm::TrainResult result = obbm::train(model, samples, tc);
      if (result.diverged) throw std::runtime_error("training diverged (non-finite loss)");
      const std::string model_path = out_path.empty() ? "model.json" : out_path;
      obbm::save_model(model, model_path);
      std::cout << json{{"model", model_path},
                        {"samples", samples.size()},
                        {"epoch_loss", result.epoch_loss}}
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*predict) {
      const obbm::Instance inst = obbm::load_instance(p_instance);
      const obbm::MpnnModel model = obbm::load_model(p_model);
      obbm::MatchingState state = obbm::MatchingState::initial(inst);
      state.t = p_t;
      state.arrived = true;
      if (!p_history.empty())
        for (char c : p_history) state.history.push_back(c == '1');
      state.history.resize(p_t - 1, 0);
      if (!p_available.empty()) {
        state.available = obbm::OfflineSet::none(inst.n_offline);
        std::stringstream ss(p_available);
        std::string tok;
        while (std::getline(ss, tok, ',')) state.available.set(std::stoi(tok));
      }
      const obbm::FeatureGraph fg = obbm::encode_state(inst, state);
      const std::vector<double> scores = obbm::forward(model, fg);
      json match_scores = json::object();
      for (size_t i = 1; i < fg.mask.size(); ++i)
        match_scores[std::to_string(fg.offline_id[fg.mask[i]])] = scores[fg.mask[i]];
      const obbm::Action action = obbm::pick_action_from_scores(fg, scores);
      std::cout << json{{"skip", scores[fg.skip_node]},
                        {"match", match_scores},
                        {"action", action.is_match() ? json(action.offline) : json("skip")}}
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*eval) {
      const auto spec = e_policy.to_spec();
      json out;
      if (!e_instance.empty()) {
        const obbm::Instance inst = obbm::load_instance(e_instance);
        const auto policy = obbm::make_policy(spec, inst);
        out = cr_stats_json(obbm::competitive_ratio(inst, *policy, e_realizations, seed));
      } else {
        if (config_path.empty()) throw std::runtime_error("eval-policy needs --instance or --config");
        const obbm::GeneratorConfig gcfg = obbm::generator_config_from_json(read_json_file(config_path));
        double sum = 0.0;
        int counted = 0, undefined = 0;
        for (int i = 0; i < e_instances; ++i) {
          const obbm::Instance inst = obbm::generate_instance(gcfg, obbm::Rng::derive(seed, 1, i + 1));
          const auto policy = obbm::make_policy(spec, inst);
          const auto stats =
              obbm::competitive_ratio(inst, *policy, e_realizations, obbm::Rng::derive(seed, 0x77, i + 1));
          if (stats.defined()) {
            sum += stats.mean_cr;
            ++counted;
          } else {
            ++undefined;
          }
        }
        out = {{"instances", counted}, {"undefined_instances", undefined}};
        if (counted > 0) out["mean_cr"] = sum / counted;
      }
      out["policy"] = spec.csv_label();
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*meta) {
      if (config_path.empty()) throw std::runtime_error("meta requires --config");
      const json cj = read_json_file(config_path);
      std::vector<obbm::GeneratorConfig> configs;
      for (const auto& g : cj.at("configs")) configs.push_back(obbm::generator_config_from_json(g));
      std::vector<std::shared_ptr<const obbm::MpnnModel>> models;
      for (const auto& p : cj.at("models"))
        models.push_back(std::make_shared<obbm::MpnnModel>(obbm::load_model(p.get<std::string>())));
      const int per_config = cj.value("instances_per_config", 20);
      const int ell = cj.value("realizations", 5);

      // record per-instance features and each candidate's mean ratio
      std::vector<std::vector<std::array<double, 6>>> feats(models.size());
      std::vector<std::vector<double>> crs(models.size());
      for (size_t c = 0; c < configs.size(); ++c)
        for (int i = 0; i < per_config; ++i) {
          const obbm::Instance inst = obbm::generate_instance(configs[c], obbm::Rng::derive(seed, c + 1, i + 1));
          const auto f = obbm::meta_features(inst);
          for (size_t mdl = 0; mdl < models.size(); ++mdl) {
            obbm::NeuralPolicy policy(inst, *models[mdl]);
            const auto stats =
                obbm::competitive_ratio(inst, policy, ell, obbm::Rng::derive(seed, 0xCC, c + 1, i + 1));
            if (!stats.defined()) continue;
            feats[mdl].push_back(f);
            crs[mdl].push_back(stats.mean_cr);
          }
        }
      obbm::MetaSelector selector;
      selector.kind = obbm::MetaSelector::Kind::kRegressor;
      for (size_t mdl = 0; mdl < models.size(); ++mdl)
        selector.weights.push_back(obbm::fit_cr_regressor(feats[mdl], crs[mdl]));
      json wj = json::array();
      for (const auto& row : selector.weights) wj.push_back(std::vector<double>(row.begin(), row.end()));
      const json out = {{"kind", "regressor"}, {"weights", wj},
                        {"feature_order", {"1", "m", "n", "m_over_n", "density", "mean_weight"}}};
      std::cout << out.dump(2) << "\n";
      if (!out_path.empty()) write_text(out_path, out.dump(2) + "\n");
      return 0;
    }

    if (*noise) {
      if (config_path.empty()) throw std::runtime_error("noise-sweep requires --config");
      json cj = read_json_file(config_path);
      obbm::BenchConfig base = obbm::bench_config_from_json(cj);
      if (app.count("--seed")) base.seed = seed;
      std::vector<double> rhos = n_rhos;
      if (rhos.empty() && cj.contains("rhos")) rhos = cj.at("rhos").get<std::vector<double>>();
      if (rhos.empty()) throw std::runtime_error("noise-sweep needs --rhos or a 'rhos' config entry");
      std::map<double, std::vector<obbm::PolicySpec>> overrides;
      if (cj.contains("policy_overrides"))
        for (const auto& [rho_str, pols] : cj.at("policy_overrides").items()) {
          std::vector<obbm::PolicySpec> specs;
          for (const auto& pj : pols) specs.push_back(obbm::policy_spec_from_json(pj));
          overrides[std::stod(rho_str)] = std::move(specs);
        }
      const auto sweeps = obbm::run_noise_sweep(base, rhos, overrides, jobs);
      const std::string dir = out_path.empty() ? "." : out_path;
      ensure_dir(dir);
      json summary = json::array();
      for (const auto& [rho, report] : sweeps) {
        std::ostringstream name;
        name << "noise_rho_" << rho;
        obbm::write_bench_csv(report, dir + "/" + name.str() + ".csv");
        json rj = obbm::bench_report_json(report);
        rj["rho"] = rho;
        summary.push_back(rj);
      }
      write_text(dir + "/noise_report.json", json{{"sweeps", summary}}.dump(2) + "\n");
      std::cout << json{{"sweeps", summary}}.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "larkit/harness.hpp"
#include "larkit/lds.hpp"
#include "larkit/selection.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace larkit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json vector_json(const Vector& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  return out;
}

json run_one(const ExperimentConfig& cfg, const fs::path& dir) {
  std::cerr << "running k=" << cfg.env.k << ", " << cfg.n_trials << " trials, T=" << cfg.T << "\n";
  const MonteCarloResult mc = run_monte_carlo(cfg);
  export_csv(mc.summary, dir / "summary.csv");
  export_trials_csv(mc.trials, dir / "trials.csv");
  emit_svg(mc.summary, dir / "regret.svg", "Cumulative regret, k = " + std::to_string(cfg.env.k));
  const Matrix wins = pairwise_matrix(mc.trials, mc.summary.agent_ids);
  export_matrix_csv(wins, mc.summary.agent_ids, dir / "pairwise.csv");

  json agents = json::object();
  for (std::size_t a = 0; a < mc.summary.agent_ids.size(); ++a) {
    std::map<std::string, std::size_t> chosen;
    for (const auto& tr : mc.trials)
      if (tr.runs[a].chosen_s) ++chosen[std::to_string(*tr.runs[a].chosen_s)];
    json entry{{"final_mean", mc.summary.T ? mc.summary.mean[a].back() : 0.0},
               {"final_std", mc.summary.T ? mc.summary.stdev[a].back() : 0.0}};
    if (!chosen.empty()) entry["chosen_s"] = chosen;
    agents[mc.summary.agent_ids[a]] = entry;
  }
  json meta{{"k", cfg.env.k},
            {"T", cfg.T},
            {"n_trials", cfg.n_trials},
            {"successful_trials", mc.trials.size()},
            {"failures", mc.failures},
            {"agents", agents},
            {"pairwise", matrix_json(wins)}};
  std::ofstream out = open_output(dir / "meta.json");
  out << meta.dump(2) << '\n';
  check_written(out, dir / "meta.json");
  return meta;
}

json run_experiment(const ExperimentConfig& cfg, const std::string& out_override) {
  const fs::path root = out_override.empty() ? fs::path(cfg.output_dir) : fs::path(out_override);
  const auto parts = cfg.expand();
  json report = json::array();
  for (const auto& c : parts) {
    const fs::path dir = cfg.k_values.empty() ? root : root / ("k" + std::to_string(c.env.k));
    json meta = run_one(c, dir);
    meta["dir"] = dir.string();
    meta.erase("pairwise");
    report.push_back(meta);
  }
  std::ofstream cfg_out = open_output(root / "config.json");
  cfg_out << config_to_json(cfg).dump(2) << '\n';
  return report;
}

std::vector<Step> read_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  std::size_t ia = header.size(), ir = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "action") ia = i;
    if (header[i] == "reward") ir = i;
  }
  if (ia == header.size() || ir == header.size())
    throw ConfigError(path + ": header must contain 'action' and 'reward'");
  std::vector<Step> steps;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    try {
      steps.push_back({std::stoul(cells.at(ia)), std::stod(cells.at(ir))});
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  if (steps.empty()) throw ConfigError(path + ": no data rows");
  return steps;
}

EnvParams inspect_params(const json& j, std::uint64_t seed) {
  json env = j.contains("env") ? j.at("env") : j;
  try {
    if (env.at("k").is_array()) env["k"] = env.at("k").at(0);
    const std::size_t k = env.at("k").get<std::size_t>();
    const double l1 = env.value("gamma_l1", 0.9);
    if (!env.contains("gamma")) {
      Rng rng(derive_seed(seed, {hash_label("gamma"), k, 0}));
      env["gamma"] = sample_gamma(k, l1, rng);
    }
    return env.get<EnvParams>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid env config: ") + e.what());
  }
}

json inspect(const EnvParams& p, double tol, long max_iter) {
  p.validate();
  const CompanionLds lds = to_companion(p);
  const DareSolution dare = solve_dare(lds, tol, max_iter);
  const Matrix M = closed_loop(lds, dare.K);
  Eigen::SelfAdjointEigenSolver<Matrix> pe(dare.P);
  return json{{"env", p},
              {"Gamma", matrix_json(lds.Gamma)},
              {"P", matrix_json(dare.P)},
              {"K", vector_json(dare.K)},
              {"closed_loop", matrix_json(M)},
              {"riccati_residual", dare.residual},
              {"riccati_iterations", dare.iterations},
              {"observability_det", observability_matrix(lds).determinant()},
              {"spectra",
               {{"gamma_spectral_radius", spectral_radius(lds.Gamma)},
                {"gamma_sigma_max", spectral_max(lds.Gamma)},
                {"closed_loop_spectral_radius", spectral_radius(M)},
                {"closed_loop_sigma_max", spectral_max(M)},
                {"P_eigenvalues", vector_json(pe.eigenvalues())}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent autoregressive bandit experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a Monte-Carlo experiment from a JSON config");
  std::string config_path, out_dir;
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");

  auto* sweep = app.add_subcommand("sweep", "Run a built-in experiment preset");
  std::string preset;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  sweep->add_option("--preset", preset, "comparison | bias-variance")
      ->required()
      ->check(CLI::IsMember({"comparison", "bias-variance"}));
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--trials", trials, "override the number of trials");
  sweep->add_option("--seed", seed, "override the master seed")->each([&](const std::string&) { seed_set = true; });

  auto* compare = app.add_subcommand("compare", "Pairwise win matrix from a results directory");
  std::string in_dir, out_path;
  compare->add_option("--in", in_dir, "directory containing trials.csv")->required();
  compare->add_option("--out", out_path, "output CSV")->required();

  auto* select = app.add_subcommand(
      "select-order",
      "Choose s by BIC and the AR order by ordered Lasso from an action,reward CSV log.\n"
      "BIC(s) = n ln(RSS(s)/n) + p(s) ln n with p(s) = |A| (2 s |A| + 1).");
  std::string log_path;
  std::size_t num_actions = 0, max_lag = 10;
  std::vector<std::size_t> candidates{0, 1, 2, 3, 5, 8, 10, 15};
  double lasso_lambda = -1.0, threshold = 1e-3;
  select->add_option("--log", log_path, "CSV with action,reward columns")->required();
  select->add_option("--actions", num_actions, "number of actions (default: max action + 1)");
  select->add_option("--candidates", candidates, "candidate s values");
  select->add_option("--max-lag", max_lag, "largest lag in the ordered Lasso design");
  select->add_option("--lambda", lasso_lambda, "ordered Lasso penalty (default: universal)");
  select->add_option("--threshold", threshold, "relative block magnitude threshold");

  auto* insp = app.add_subcommand("inspect", "Dump the companion system, Riccati solution and spectra");
  std::uint64_t inspect_seed = 0;
  insp->add_option("--config", config_path, "env or experiment config (JSON)")->required();
  insp->add_option("--seed", inspect_seed, "seed for gamma when the config omits it");
  double riccati_tol = 1e-12;
  long riccati_max_iter = 100000;
  insp->add_option("--tol", riccati_tol, "Riccati fixed-point tolerance");
  insp->add_option("--max-iter", riccati_max_iter, "Riccati iteration cap");

  auto* verify = app.add_subcommand("verify", "Recompute summary.csv from trials.csv and diff");
  verify->add_option("--in", in_dir, "results directory or sweep root")->required();
  double verify_tol = 1e-9;
  verify->add_option("--tol", verify_tol, "allowed absolute difference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = parse_experiment_config(read_json_file(config_path));
      std::cout << run_experiment(cfg, out_dir).dump(2) << '\n';
    } else if (*sweep) {
      ExperimentConfig cfg = preset == "comparison" ? comparison_preset() : bias_variance_preset();
      if (trials > 0) cfg.n_trials = trials;
      if (seed_set) cfg.seed = seed;
      std::cout << run_experiment(cfg, out_dir).dump(2) << '\n';
    } else if (*compare) {
      const RawTrials raw = read_trials_csv(fs::path(in_dir) / "trials.csv");
      const Matrix wins = pairwise_matrix(final_regrets(raw), raw.agent_ids);
      export_matrix_csv(wins, raw.agent_ids, out_path);
      std::cout << json{{"agents", raw.agent_ids}, {"matrix", matrix_json(wins)}}.dump(2) << '\n';
    } else if (*select) {
      const std::vector<Step> steps = read_log_csv(log_path);
      if (num_actions == 0)
        for (const Step& s : steps) num_actions = std::max(num_actions, s.action + 1);
      OrderSelectionOptions opt;
      opt.candidates = candidates;
      opt.max_lag = max_lag;
      opt.lasso_lambda = lasso_lambda;
      opt.threshold = threshold;
      const OrderSelection sel = select_order(steps, num_actions, opt);
      json bic = json::array();
      for (const auto& e : sel.bic.table)
        bic.push_back(json{{"s", e.s}, {"n", e.n}, {"p", e.params}, {"rss", e.rss}, {"bic", e.bic},
                       {"admissible", e.admissible}});
      std::cout << json{{"s", sel.bic.s},
                        {"k_hat", sel.k_hat},
                        {"k_hat_by_action", sel.k_hat_by_action},
                        {"lasso_lambda_by_action", sel.lasso_lambda_by_action},
                        {"bic", bic}}
                       .dump(2)
                << '\n';
    } else if (*insp) {
      std::cout << inspect(inspect_params(read_json_file(config_path), inspect_seed), riccati_tol, riccati_max_iter).dump(2) << '\n';
    } else if (*verify) {
      // A sweep root holds one results directory per k.
      std::vector<fs::path> dirs;
      if (fs::exists(fs::path(in_dir) / "trials.csv")) {
        dirs.push_back(in_dir);
      } else if (fs::is_directory(in_dir)) {
        for (const auto& entry : fs::directory_iterator(in_dir))
          if (entry.is_directory() && fs::exists(entry.path() / "trials.csv")) dirs.push_back(entry.path());
        std::sort(dirs.begin(), dirs.end());
      }
      if (dirs.empty()) throw UsageError("no trials.csv under '" + in_dir + "'");
      double worst = 0.0;
      json per_dir = json::object();
      for (const auto& d : dirs) {
        const double diff = verify_results(d);
        per_dir[d.filename().string()] = diff;
        worst = std::max(worst, diff);
      }
      std::cout << json{{"max_abs_diff", worst}, {"ok", worst <= verify_tol}, {"dirs", per_dir}}.dump() << '\n';
      return worst <= verify_tol ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

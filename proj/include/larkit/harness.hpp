#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "larkit/agents.hpp"
#include "larkit/env.hpp"
#include "larkit/errors.hpp"
#include "larkit/lds.hpp"
#include "larkit/oracle.hpp"
#include "larkit/rng.hpp"

namespace larkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct AgentSpec {
  std::string id;
  std::string kind;
  json params = json::object();
};

inline bool is_known_kind(const std::string& kind) {
  return kind == "larl" || kind == "stationary_ucb" || kind == "sw_ucb" || kind == "rexp3" ||
         kind == "ar_ucb" || kind == "intermediate" || kind == "oracle";
}

struct ExperimentConfig {
  std::size_t T = 200;
  std::size_t n_trials = 100;
  std::uint64_t seed = 0;
  EnvParams env;
  std::vector<std::size_t> k_values;  // sweep values; empty means env.k only
  bool sample_gamma = true;           // draw gamma rather than use env.gamma
  bool gamma_per_trial = false;       // one gamma draw per k unless set
  double gamma_l1 = 0.9;
  std::vector<AgentSpec> agents;
  std::string output_dir = "results";

  void validate() const {
    if (T == 0) throw ConfigError("T must be >= 1");
    if (n_trials == 0) throw ConfigError("n_trials must be >= 1");
    if (agents.empty()) throw ConfigError("at least one agent is required");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      if (agents[i].id.empty()) throw ConfigError("agent ids must be nonempty");
      if (!is_known_kind(agents[i].kind))
        throw ConfigError("agent '" + agents[i].id + "': unknown kind '" + agents[i].kind + "'");
      for (std::size_t j = 0; j < i; ++j)
        if (agents[i].id == agents[j].id) throw ConfigError("duplicate agent id '" + agents[i].id + "'");
    }
    if (sample_gamma) {
      if (!(gamma_l1 > 0.0 && gamma_l1 < 1.0)) throw ConfigError("gamma_l1 must lie in (0, 1)");
      EnvParams probe = env;
      probe.gamma.assign(probe.k, 0.0);
      probe.validate();
    } else {
      env.validate();
    }
  }

  /// One concrete config per sweep value of k.
  std::vector<ExperimentConfig> expand() const {
    if (k_values.empty()) return {*this};
    std::vector<ExperimentConfig> out;
    for (std::size_t k : k_values) {
      ExperimentConfig c = *this;
      c.k_values.clear();
      c.env.k = k;
      c.env.gamma.assign(k, 0.0);
      c.env.init_mean.assign(k, 0.0);
      c.env.init_cov_diag.assign(k, 1.0);
      out.push_back(std::move(c));
    }
    return out;
  }
};

inline ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  try {
    cfg.T = j.value("T", cfg.T);
    cfg.n_trials = j.value("n_trials", cfg.n_trials);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    json env = j.at("env");
    cfg.gamma_l1 = env.value("gamma_l1", cfg.gamma_l1);
    cfg.gamma_per_trial = env.value("gamma_per_trial", cfg.gamma_per_trial);
    if (env.at("k").is_array()) {
      cfg.k_values = env.at("k").get<std::vector<std::size_t>>();
      if (cfg.k_values.empty()) throw ConfigError("env.k list is empty");
      if (env.contains("gamma")) throw ConfigError("env.gamma cannot be fixed when k is a list");
      env["k"] = cfg.k_values.front();
    }
    const std::size_t k = env.at("k").get<std::size_t>();
    cfg.sample_gamma = !env.contains("gamma");
    if (cfg.sample_gamma) env["gamma"] = std::vector<double>(k, 0.0);
    if (cfg.k_values.empty() || cfg.k_values.size() == 1) {
      // keep user-supplied init vectors when k is a scalar
    } else {
      env.erase("init_mean");
      env.erase("init_cov_diag");
    }
    cfg.env = env.get<EnvParams>();
    for (const auto& a : j.at("agents")) {
      AgentSpec spec;
      spec.id = a.at("id").get<std::string>();
      spec.kind = a.at("kind").get<std::string>();
      spec.params = a;
      spec.params.erase("id");
      spec.params.erase("kind");
      cfg.agents.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

/// Baselines plus LARL with BIC-selected s, T = 200, 100 trials, k in {1, 5, 10}.
inline ExperimentConfig comparison_preset() {
  ExperimentConfig cfg;
  cfg.T = 200;
  cfg.n_trials = 100;
  cfg.seed = 2024;
  cfg.env = EnvParams::with_gamma({0.0});
  cfg.k_values = {1, 5, 10};
  cfg.agents = {
      {"larl_bic", "larl", json{{"s", "bic"}}},
      {"stationary", "stationary_ucb", json::object()},
      {"sw_ucb", "sw_ucb", json::object()},
      {"rexp3", "rexp3", json::object()},
      {"ar_ucb", "ar_ucb", json::object()},
  };
  cfg.output_dir = "results/comparison";
  return cfg;
}

/// LARL with fixed s in {1, 5, 10, 15} against stationary UCB, k in {1, 5, 10}.
inline ExperimentConfig bias_variance_preset() {
  ExperimentConfig cfg = comparison_preset();
  cfg.agents = {
      {"larl_s1", "larl", json{{"s", 1}}},   {"larl_s5", "larl", json{{"s", 5}}},
      {"larl_s10", "larl", json{{"s", 10}}}, {"larl_s15", "larl", json{{"s", 15}}},
      {"stationary", "stationary_ucb", json::object()},
  };
  cfg.output_dir = "results/bias_variance";
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json env = cfg.env;
  if (cfg.sample_gamma) env.erase("gamma");
  env["gamma_l1"] = cfg.gamma_l1;
  env["gamma_per_trial"] = cfg.gamma_per_trial;
  if (!cfg.k_values.empty()) env["k"] = cfg.k_values;
  json agents = json::array();
  for (const auto& a : cfg.agents) {
    json x = a.params;
    x["id"] = a.id;
    x["kind"] = a.kind;
    agents.push_back(x);
  }
  return json{{"T", cfg.T},         {"n_trials", cfg.n_trials}, {"seed", cfg.seed},
              {"env", env},         {"agents", agents},         {"output_dir", cfg.output_dir}};
}

// ---------------------------------------------------------------------------
// Trial realization: latent path and counterfactual reward noise shared by all agents.

struct TrialRealization {
  EnvParams params;
  std::vector<double> initial_window;  // newest first
  std::vector<double> z;               // z_1, ..., z_T
  std::uint64_t noise_seed = 0;

  /// Reward of `action` at step t (0-based), identical for every agent.
  double reward(std::size_t t, std::size_t action) const {
    return reward_from_noise(params, action, z[t], counter_normal(noise_seed, t, action));
  }
};

inline EnvParams trial_env_params(const ExperimentConfig& cfg, std::size_t trial_id) {
  EnvParams p = cfg.env;
  if (cfg.sample_gamma) {
    const std::uint64_t key = cfg.gamma_per_trial ? trial_id : 0;
    Rng rng(derive_seed(cfg.seed, {hash_label("gamma"), p.k, key}));
    p.gamma = sample_gamma(p.k, cfg.gamma_l1, rng);
  }
  p.validate();
  return p;
}

inline TrialRealization realize_trial(const ExperimentConfig& cfg, std::size_t trial_id) {
  TrialRealization r;
  r.params = trial_env_params(cfg, trial_id);
  EnvState state = init_env(r.params, derive_seed(cfg.seed, {hash_label("latent"), trial_id}));
  r.initial_window = state.z_window;
  r.z.reserve(cfg.T);
  for (std::size_t t = 0; t < cfg.T; ++t) r.z.push_back(advance_latent(state, r.params));
  r.noise_seed = derive_seed(cfg.seed, {hash_label("reward-noise"), trial_id});
  return r;
}

inline std::uint64_t hash_trajectory(const std::vector<double>& z) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (double v : z) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Agent construction

template <class T>
T param_or(const json& p, const char* key, T fallback) {
  return p.contains(key) ? p.at(key).get<T>() : fallback;
}

inline RadiusParams radius_from(const json& p, double default_L) {
  RadiusParams r;
  r.delta = param_or(p, "delta", r.delta);
  r.R = param_or(p, "R", r.R);
  r.S = param_or(p, "S", r.S);
  r.L = param_or(p, "L", default_L);
  r.validate();
  return r;
}

/// Creates a fresh agent for one trial. "oracle" is handled by the runner.
inline std::unique_ptr<Agent> make_agent(const AgentSpec& spec, const ExperimentConfig& cfg,
                                         const EnvParams& env, std::uint64_t seed) {
  const json& p = spec.params;
  const std::size_t na = env.num_actions;
  try {
    if (spec.kind == "larl") {
      LarlConfig lc;
      if (p.contains("s") && p.at("s").is_number_integer()) {
        lc.s = p.at("s").get<std::size_t>();
      } else if (p.contains("s") && p.at("s") != "bic") {
        throw ConfigError("larl: s must be an integer or \"bic\"");
      }
      lc.lambda = param_or(p, "lambda", lc.lambda);
      lc.delta = param_or(p, "delta", lc.delta);
      lc.R = param_or(p, "R", lc.R);
      lc.S = param_or(p, "S", lc.S);
      if (p.contains("L")) lc.L = p.at("L").get<double>();
      lc.reward_max = param_or(p, "reward_max", lc.reward_max);
      lc.t_prime = param_or(p, "t_prime", cfg.T / 5);
      lc.candidates = param_or(p, "candidates", lc.candidates);
      return std::make_unique<LarlAgent>(na, std::move(lc), seed);
    }
    if (spec.kind == "stationary_ucb") {
      return std::make_unique<StationaryUcb>(na, param_or(p, "lambda", 1.0),
                                             radius_from(p, context_norm_bound(0, 0.0)));
    }
    if (spec.kind == "sw_ucb") {
      return std::make_unique<SlidingWindowUcb>(
          na, param_or(p, "window", SlidingWindowUcb::default_window(cfg.T)),
          param_or(p, "xi", 0.6), param_or(p, "scale", 1.0));
    }
    if (spec.kind == "rexp3") {
      const std::size_t batch = param_or(p, "batch", Rexp3::default_batch(cfg.T));
      return std::make_unique<Rexp3>(na, batch, param_or(p, "eta", Rexp3::default_eta(na, batch)),
                                     param_or(p, "reward_bound", 5.0), seed);
    }
    if (spec.kind == "ar_ucb") {
      const std::size_t order = param_or(p, "order", env.k);
      const double rmax = param_or(p, "reward_max", 2.5);
      return std::make_unique<ArUcb>(
          na, order, param_or(p, "lambda", 1.0),
          radius_from(p, static_cast<double>(order) * rmax * rmax + 1.0));
    }
    if (spec.kind == "intermediate") return std::make_unique<IntermediateAgent>(env);
  } catch (const json::exception& e) {
    throw ConfigError("agent '" + spec.id + "': " + e.what());
  }
  throw ConfigError("agent '" + spec.id + "': unknown kind '" + spec.kind + "'");
}


// ---------------------------------------------------------------------------
// Running trials

struct AgentRun {
  std::string id;
  RegretTrace trace;
  std::optional<std::size_t> chosen_s;
  std::uint64_t trajectory_hash = 0;
};

struct TrialResult {
  std::size_t trial_id = 0;
  std::vector<AgentRun> runs;  // same order as config agents
  std::vector<double> gamma;
  std::vector<double> initial_window;
};

class TrialError : public std::runtime_error {
 public:
  TrialError(std::size_t trial, std::string agent, const std::string& what)
      : std::runtime_error("trial " + std::to_string(trial) + ", agent '" + agent + "': " + what),
        trial_(trial),
        agent_(std::move(agent)) {}
  std::size_t trial() const noexcept { return trial_; }
  const std::string& agent() const noexcept { return agent_; }

 private:
  std::size_t trial_;
  std::string agent_;
};

inline std::uint64_t agent_seed(const ExperimentConfig& cfg, const AgentSpec& spec,
                                std::size_t trial_id) {
  // Keyed on the spec contents, not the id: identical specs behave identically.
  return derive_seed(cfg.seed, {hash_label("agent"), trial_id, hash_label(spec.kind),
                                hash_label(spec.params.dump())});
}

/// Plays one agent through a realized trial.
inline AgentRun play(const AgentSpec& spec, const ExperimentConfig& cfg, const TrialRealization& r,
                     std::size_t trial_id) {
  AgentRun run;
  run.id = spec.id;
  const std::size_t T = r.z.size();
  std::vector<double> seen_z;
  seen_z.reserve(T);
  std::unique_ptr<Agent> agent;
  if (spec.kind != "oracle") agent = make_agent(spec, cfg, r.params, agent_seed(cfg, spec, trial_id));
  for (std::size_t t = 0; t < T; ++t) {
    const double z = r.z[t];
    seen_z.push_back(z);
    const std::size_t best = oracle_action(r.params, z);
    const std::size_t a = agent ? agent->select() : best;
    if (a >= r.params.num_actions) throw UsageError("agent chose an out-of-range action");
    run.trace.push(best, a, instantaneous_regret(r.params, z, best, a));
    if (agent) agent->observe(a, r.reward(t, a));
  }
  if (agent) run.chosen_s = agent->context_window();
  run.trajectory_hash = hash_trajectory(seen_z);
  return run;
}

inline TrialResult run_trial(const ExperimentConfig& cfg, std::size_t trial_id) {
  const TrialRealization r = realize_trial(cfg, trial_id);
  TrialResult result;
  result.trial_id = trial_id;
  result.gamma = r.params.gamma;
  result.initial_window = r.initial_window;
  for (const AgentSpec& spec : cfg.agents) {
    try {
      result.runs.push_back(play(spec, cfg, r, trial_id));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw TrialError(trial_id, spec.id, e.what());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Monte-Carlo aggregation

struct Summary {
  std::vector<std::string> agent_ids;
  std::size_t T = 0;
  std::size_t n_trials = 0;
  std::vector<std::vector<double>> mean;  // [agent][t]
  std::vector<std::vector<double>> stdev;  // [agent][t], sample std (0 for one trial)
};

struct MonteCarloResult {
  std::vector<TrialResult> trials;  // successful trials in trial_id order
  std::vector<std::string> failures;
  Summary summary;
};

/// Worker count: hardware concurrency, capped by LARKIT_THREADS.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LARKIT_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

inline Summary summarize(const std::vector<TrialResult>& trials,
                         const std::vector<std::string>& agent_ids, std::size_t T) {
  Summary s;
  s.agent_ids = agent_ids;
  s.T = T;
  s.n_trials = trials.size();
  const double n = static_cast<double>(trials.size());
  for (std::size_t a = 0; a < agent_ids.size(); ++a) {
    std::vector<double> mean(T, 0.0), sd(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0;
      for (const auto& tr : trials) acc += tr.runs[a].trace.cumulative[t];
      const double m = trials.empty() ? 0.0 : acc / n;
      double ss = 0.0;
      for (const auto& tr : trials) {
        const double d = tr.runs[a].trace.cumulative[t] - m;
        ss += d * d;
      }
      mean[t] = m;
      sd[t] = trials.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    s.mean.push_back(std::move(mean));
    s.stdev.push_back(std::move(sd));
  }
  return s;
}

inline MonteCarloResult run_monte_carlo(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::optional<TrialResult>> slots(cfg.n_trials);
  std::vector<std::string> errors(cfg.n_trials);
  std::atomic<std::size_t> next{0};
  std::mutex config_error_mutex;
  std::optional<ConfigError> config_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.n_trials; i = next++) {
      try {
        slots[i] = run_trial(cfg, i);
      } catch (const ConfigError& e) {
        std::lock_guard lock(config_error_mutex);
        if (!config_error) config_error = e;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t workers = worker_count(cfg.n_trials);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (config_error) throw *config_error;

  MonteCarloResult out;
  for (std::size_t i = 0; i < cfg.n_trials; ++i) {
    if (slots[i]) {
      out.trials.push_back(std::move(*slots[i]));
    } else {
      out.failures.push_back(errors[i]);
    }
  }
  std::vector<std::string> ids;
  for (const auto& a : cfg.agents) ids.push_back(a.id);
  out.summary = summarize(out.trials, ids, cfg.T);
  return out;
}

/// Final cumulative regret per trial, keyed by agent id.
using FinalRegrets = std::vector<std::map<std::string, double>>;

inline FinalRegrets final_regrets(const std::vector<TrialResult>& trials) {
  FinalRegrets out;
  for (const auto& tr : trials) {
    std::map<std::string, double> m;
    for (const auto& run : tr.runs) m[run.id] = run.trace.final_regret();
    out.push_back(std::move(m));
  }
  return out;
}

/// Entry (i, j): fraction of trials where agent i ended with strictly lower
/// cumulative regret than agent j. Diagonal is 0.
inline Matrix pairwise_matrix(const FinalRegrets& finals, const std::vector<std::string>& ids) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  Matrix m = Matrix::Zero(n, n);
  if (finals.empty()) return m;
  for (const auto& trial : finals)
    for (const auto& id : ids)
      if (!trial.count(id)) throw UsageError("pairwise_matrix: agent '" + id + "' missing from a trial");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      std::size_t wins = 0;
      for (const auto& trial : finals)
        if (trial.at(ids[static_cast<std::size_t>(i)]) < trial.at(ids[static_cast<std::size_t>(j)])) ++wins;
      m(i, j) = static_cast<double>(wins) / static_cast<double>(finals.size());
    }
  return m;
}

inline Matrix pairwise_matrix(const std::vector<TrialResult>& trials,
                              const std::vector<std::string>& ids) {
  return pairwise_matrix(final_regrets(trials), ids);
}

// ---------------------------------------------------------------------------
// Files

/// Fixed 6-significant-digit formatting for summary outputs.
inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Round-trip formatting for raw per-trial data.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void check_written(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// agent_id,t,mean_cum_regret,std_cum_regret with t = 1..T.
inline void export_csv(const Summary& s, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "agent_id,t,mean_cum_regret,std_cum_regret\n";
  for (std::size_t a = 0; a < s.agent_ids.size(); ++a)
    for (std::size_t t = 0; t < s.T; ++t)
      out << s.agent_ids[a] << ',' << (t + 1) << ',' << fmt6(s.mean[a][t]) << ','
          << fmt6(s.stdev[a][t]) << '\n';
  check_written(out, path);
}

/// Raw per-step records: trial_id,agent_id,t,action,oracle_action,inst_regret,cum_regret.
inline void export_trials_csv(const std::vector<TrialResult>& trials,
                              const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "trial_id,agent_id,t,action,oracle_action,inst_regret,cum_regret\n";
  for (const auto& tr : trials)
    for (const auto& run : tr.runs)
      for (std::size_t t = 0; t < run.trace.size(); ++t)
        out << tr.trial_id << ',' << run.id << ',' << (t + 1) << ',' << run.trace.agent_actions[t]
            << ',' << run.trace.oracle_actions[t] << ',' << fmt17(run.trace.instantaneous[t]) << ','
            << fmt17(run.trace.cumulative[t]) << '\n';
  check_written(out, path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Trials read back from trials.csv, in file order.
struct RawTrials {
  std::vector<std::string> agent_ids;              // first-appearance order
  std::vector<std::size_t> trial_ids;              // first-appearance order
  std::map<std::size_t, std::map<std::string, std::vector<double>>> cumulative;
};

inline RawTrials read_trials_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("trial_id,agent_id,t,", 0) != 0)
    throw std::runtime_error("'" + path.string() + "' is not a trials CSV");
  RawTrials raw;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    const std::size_t trial = std::stoul(cells[0]);
    const std::string& id = cells[1];
    if (!raw.cumulative.count(trial)) raw.trial_ids.push_back(trial);
    if (std::find(raw.agent_ids.begin(), raw.agent_ids.end(), id) == raw.agent_ids.end())
      raw.agent_ids.push_back(id);
    raw.cumulative[trial][id].push_back(std::stod(cells[6]));
  }
  return raw;
}

inline FinalRegrets final_regrets(const RawTrials& raw) {
  FinalRegrets out;
  for (std::size_t trial : raw.trial_ids) {
    std::map<std::string, double> m;
    for (const auto& [id, cum] : raw.cumulative.at(trial)) m[id] = cum.empty() ? 0.0 : cum.back();
    out.push_back(std::move(m));
  }
  return out;
}

/// Summary recomputed from raw per-trial cumulative regret.
inline Summary summarize(const RawTrials& raw) {
  std::vector<TrialResult> trials;
  std::size_t T = 0;
  for (std::size_t trial : raw.trial_ids) {
    TrialResult tr;
    tr.trial_id = trial;
    for (const auto& id : raw.agent_ids) {
      AgentRun run;
      run.id = id;
      const auto& per_agent = raw.cumulative.at(trial);
      if (!per_agent.count(id)) throw UsageError("trial " + std::to_string(trial) + " lacks agent " + id);
      run.trace.cumulative = per_agent.at(id);
      T = run.trace.cumulative.size();
      tr.runs.push_back(std::move(run));
    }
    trials.push_back(std::move(tr));
  }
  return summarize(trials, raw.agent_ids, T);
}

struct SummaryRow {
  std::string agent_id;
  std::size_t t = 0;
  double mean = 0.0;
  double stdev = 0.0;
};

inline std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 4) throw std::runtime_error(path.string() + ": malformed summary row");
    rows.push_back({c[0], std::stoul(c[1]), std::stod(c[2]), std::stod(c[3])});
  }
  return rows;
}

/// Largest absolute difference between summary.csv and the summary recomputed from
/// trials.csv (after the same 6-digit rounding). Throws if the row sets differ.
inline double verify_results(const std::filesystem::path& dir) {
  const Summary recomputed = summarize(read_trials_csv(dir / "trials.csv"));
  const auto rows = read_summary_csv(dir / "summary.csv");
  if (rows.size() != recomputed.agent_ids.size() * recomputed.T)
    throw UsageError("summary.csv row count does not match trials.csv");
  double worst = 0.0;
  std::size_t i = 0;
  for (std::size_t a = 0; a < recomputed.agent_ids.size(); ++a)
    for (std::size_t t = 0; t < recomputed.T; ++t, ++i) {
      const SummaryRow& row = rows[i];
      if (row.agent_id != recomputed.agent_ids[a] || row.t != t + 1)
        throw UsageError("summary.csv rows are not in agent/t order");
      worst = std::max(worst, std::abs(row.mean - std::stod(fmt6(recomputed.mean[a][t]))));
      worst = std::max(worst, std::abs(row.stdev - std::stod(fmt6(recomputed.stdev[a][t]))));
    }
  return worst;
}

inline void export_matrix_csv(const Matrix& m, const std::vector<std::string>& ids,
                              const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "row";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << fmt6(m(i, j));
    out << '\n';
  }
  check_written(out, path);
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Self-contained SVG line chart: mean cumulative regret per agent with a
/// +/- one standard deviation band.
inline void emit_svg(const Summary& s, const std::filesystem::path& path,
                     const std::string& title = "Cumulative regret") {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double W = 640, H = 420, left = 70, right = 170, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double ymax = 0.0, ymin = 0.0;
  for (std::size_t a = 0; a < s.agent_ids.size(); ++a)
    for (std::size_t t = 0; t < s.T; ++t) {
      ymax = std::max(ymax, s.mean[a][t] + s.stdev[a][t]);
      ymin = std::min(ymin, s.mean[a][t] - s.stdev[a][t]);
    }
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double xspan = s.T > 1 ? static_cast<double>(s.T - 1) : 1.0;
  auto X = [&](std::size_t t) { return left + pw * static_cast<double>(t) / xspan; };
  auto Y = [&](double v) { return top + ph * (1.0 - (v - ymin) / (ymax - ymin)); };

  std::ofstream out = open_output(path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << fmt6(Y(v) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
        << fmt6(v) << "</text>\n";
    const std::size_t t = static_cast<std::size_t>(std::lround(xspan * i / 4.0));
    out << "<text x=\"" << fmt6(X(t)) << "\" y=\"" << top + ph + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">" << (t + 1) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18
      << "\" text-anchor=\"middle\" font-size=\"13\">time step t</text>\n";
  out << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << top + ph / 2 << ")\">cumulative regret</text>\n";
  for (std::size_t a = 0; a < s.agent_ids.size(); ++a) {
    const char* color = palette[a % 10];
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (std::size_t t = 0; t < s.T; ++t) out << fmt6(X(t)) << ',' << fmt6(Y(s.mean[a][t] + s.stdev[a][t])) << ' ';
    for (std::size_t t = s.T; t-- > 0;) out << fmt6(X(t)) << ',' << fmt6(Y(s.mean[a][t] - s.stdev[a][t])) << ' ';
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t t = 0; t < s.T; ++t) out << fmt6(X(t)) << ',' << fmt6(Y(s.mean[a][t])) << ' ';
    out << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(a);
    out << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    out << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
        << xml_escape(s.agent_ids[a]) << "</text>\n";
  }
  out << "</svg>\n";
  check_written(out, path);
}

}  // namespace larkit

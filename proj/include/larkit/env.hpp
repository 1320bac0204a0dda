#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "larkit/errors.hpp"
#include "larkit/rng.hpp"

namespace larkit {

/// Ground-truth parameters of a latent auto-regressive bandit.
///
/// Latent state:  z_t = gamma0 + sum_j gamma[j-1] * z_{t-j} + xi_t,  xi_t ~ N(0, sigma_z^2)
/// Reward:        r_t(a) = mu[a] + beta[a] * z_t + eps_t(a),        eps_t(a) ~ N(0, beta[a]^2 sigma_r^2)
///
/// init_mean / init_cov_diag describe [z_0, ..., z_{k-1}] in chronological order.
struct EnvParams {
  std::size_t k = 1;
  double gamma0 = 0.0;
  std::vector<double> gamma{0.0};
  double sigma_z = 1.0;
  double sigma_r = 1.0;
  std::vector<double> mu{0.0, 0.0};
  std::vector<double> beta{-1.0, 1.0};
  std::size_t num_actions = 2;
  std::vector<double> init_mean{0.0};
  std::vector<double> init_cov_diag{1.0};

  double gamma_l1() const {
    double s = 0.0;
    for (double g : gamma) s += std::abs(g);
    return s;
  }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    if (gamma.size() != k) throw ConfigError("gamma must have length k");
    if (!std::isfinite(gamma0)) throw ConfigError("gamma0 must be finite");
    for (double g : gamma)
      if (!std::isfinite(g)) throw ConfigError("gamma entries must be finite");
    if (!(gamma_l1() < 1.0))
      throw ConfigError("AR process must be stable: sum |gamma_j| = " + std::to_string(gamma_l1()) +
                        " is not < 1");
    if (!(sigma_z >= 0.0) || !std::isfinite(sigma_z)) throw ConfigError("sigma_z must be >= 0");
    if (!(sigma_r >= 0.0) || !std::isfinite(sigma_r)) throw ConfigError("sigma_r must be >= 0");
    if (num_actions == 0) throw ConfigError("num_actions must be positive");
    if (mu.size() != num_actions) throw ConfigError("mu must have length num_actions");
    if (beta.size() != num_actions) throw ConfigError("beta must have length num_actions");
    for (std::size_t a = 0; a < num_actions; ++a) {
      if (!std::isfinite(mu[a]) || !std::isfinite(beta[a]))
        throw ConfigError("mu and beta must be finite");
      if (beta[a] == 0.0) throw ConfigError("beta[" + std::to_string(a) + "] must be nonzero");
    }
    if (init_mean.size() != k) throw ConfigError("init_mean must have length k");
    if (init_cov_diag.size() != k) throw ConfigError("init_cov_diag must have length k");
    for (double v : init_cov_diag)
      if (!(v >= 0.0)) throw ConfigError("init_cov_diag must be nonnegative");
  }

  void check_action(std::size_t action) const {
    if (action >= num_actions)
      throw UsageError("action " + std::to_string(action) + " out of range [0, " +
                       std::to_string(num_actions) + ")");
  }

  /// Default experiment environment with the given AR coefficients.
  static EnvParams with_gamma(std::vector<double> g) {
    EnvParams p;
    p.k = g.size();
    p.gamma = std::move(g);
    p.init_mean.assign(p.k, 0.0);
    p.init_cov_diag.assign(p.k, 1.0);
    return p;
  }
};

inline void to_json(nlohmann::json& j, const EnvParams& p) {
  j = nlohmann::json{{"k", p.k},
                     {"gamma0", p.gamma0},
                     {"gamma", p.gamma},
                     {"sigma_z", p.sigma_z},
                     {"sigma_r", p.sigma_r},
                     {"mu", p.mu},
                     {"beta", p.beta},
                     {"num_actions", p.num_actions},
                     {"init_mean", p.init_mean},
                     {"init_cov_diag", p.init_cov_diag}};
}

/// Reads an EnvParams object. k and gamma are required; the noise scales,
/// mu and beta fall back to the two-armed defaults, init_mean / init_cov_diag
/// to the standard normal and num_actions to |mu|.
inline void from_json(const nlohmann::json& j, EnvParams& p) {
  try {
    p.k = j.at("k").get<std::size_t>();
    p.gamma0 = j.value("gamma0", 0.0);
    p.gamma = j.at("gamma").get<std::vector<double>>();
    const EnvParams defaults;
    p.sigma_z = j.value("sigma_z", defaults.sigma_z);
    p.sigma_r = j.value("sigma_r", defaults.sigma_r);
    p.mu = j.value("mu", defaults.mu);
    p.beta = j.value("beta", defaults.beta);
    p.num_actions = j.value("num_actions", p.mu.size());
    p.init_mean = j.value("init_mean", std::vector<double>(p.k, 0.0));
    p.init_cov_diag = j.value("init_cov_diag", std::vector<double>(p.k, 1.0));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid EnvParams: ") + e.what());
  }
}

/// Rolling latent window plus the generator that drives latent noise.
struct EnvState {
  std::vector<double> z_window;  // newest first: z_{t-1}, z_{t-2}, ..., z_{t-k}
  std::uint64_t t = 0;
  Rng rng;
};

/// Rescales a raw draw to the requested L1 norm.
inline std::vector<double> rescale_to_l1(std::vector<double> raw, double target_l1) {
  double l1 = 0.0;
  for (double g : raw) l1 += std::abs(g);
  if (l1 == 0.0) throw UsageError("cannot rescale the zero vector");
  for (double& g : raw) g *= target_l1 / l1;
  return raw;
}

/// Draws AR coefficients uniformly on [-1, 1]^k, rescaled so that sum |gamma_j| == target_l1.
inline std::vector<double> sample_gamma(std::size_t k, double target_l1, Rng& rng) {
  if (k == 0) throw ConfigError("k must be positive");
  if (!(target_l1 > 0.0 && target_l1 < 1.0)) throw ConfigError("target_l1 must lie in (0, 1)");
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> raw(k);
    double l1 = 0.0;
    for (double& g : raw) {
      g = rng.uniform(-1.0, 1.0);
      l1 += std::abs(g);
    }
    if (l1 > 0.0) return rescale_to_l1(std::move(raw), target_l1);
  }
  throw NumericError("sample_gamma: degenerate draw (zero vector) 100 times in a row");
}

inline EnvState init_env(const EnvParams& params, std::uint64_t seed) {
  params.validate();
  EnvState state;
  state.rng = Rng(seed);
  state.z_window.assign(params.k, 0.0);
  std::vector<double> chrono(params.k);
  for (std::size_t i = 0; i < params.k; ++i)
    chrono[i] = params.init_mean[i] + std::sqrt(params.init_cov_diag[i]) * state.rng.normal();
  for (std::size_t i = 0; i < params.k; ++i) state.z_window[i] = chrono[params.k - 1 - i];
  state.t = params.k;
  return state;
}

/// Noiseless part of the AR recursion for the current window.
inline double latent_mean(const EnvState& state, const EnvParams& params) {
  double z = params.gamma0;
  for (std::size_t j = 0; j < params.k; ++j) z += params.gamma[j] * state.z_window[j];
  return z;
}

/// Draws z_t, shifts it into the window and returns it.
inline double advance_latent(EnvState& state, const EnvParams& params) {
  const double z = latent_mean(state, params) + params.sigma_z * state.rng.normal();
  for (std::size_t j = params.k - 1; j > 0; --j) state.z_window[j] = state.z_window[j - 1];
  state.z_window[0] = z;
  ++state.t;
  return z;
}

/// Latest latent value z_t (head of the window).
inline double current_latent(const EnvState& state) { return state.z_window.front(); }

inline double mean_reward(const EnvParams& params, std::size_t action, double z) {
  params.check_action(action);
  return params.mu[action] + params.beta[action] * z;
}

/// Reward given a standard normal draw for the action noise.
inline double reward_from_noise(const EnvParams& params, std::size_t action, double z,
                                double std_normal) {
  return mean_reward(params, action, z) + params.beta[action] * params.sigma_r * std_normal;
}

inline double emit_reward(const EnvState& state, const EnvParams& params, std::size_t action,
                          Rng& rng) {
  params.check_action(action);
  return reward_from_noise(params, action, current_latent(state), rng.normal());
}

}  // namespace larkit

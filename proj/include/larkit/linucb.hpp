#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "larkit/errors.hpp"
#include "larkit/lds.hpp"

namespace larkit {

/// One observed interaction.
struct Step {
  std::size_t action = 0;
  double reward = 0.0;
};

/// Context of dimension 2*s*|A| + 1: reward-weighted one-hots for the last s
/// steps (oldest slot first), the plain one-hots, then a constant 1.
struct ContextVector {
  Vector phi;
  std::size_t s = 0;
  std::size_t num_actions = 0;
};

inline std::size_t context_dim(std::size_t s, std::size_t num_actions) {
  return 2 * s * num_actions + 1;
}

/// Builds the context from the most recent steps. If fewer than s steps are
/// available they fill the newest slots and older slots stay zero.
inline ContextVector build_context(std::span<const Step> history, std::size_t s,
                                   std::size_t num_actions) {
  ContextVector ctx;
  ctx.s = s;
  ctx.num_actions = num_actions;
  const std::size_t block = s * num_actions;
  ctx.phi = Vector::Zero(static_cast<Eigen::Index>(2 * block + 1));
  ctx.phi(static_cast<Eigen::Index>(2 * block)) = 1.0;
  const std::size_t m = std::min(s, history.size());
  const std::size_t first = history.size() - m;
  for (std::size_t i = 0; i < m; ++i) {
    const Step& step = history[first + i];
    if (step.action >= num_actions)
      throw UsageError("build_context: action " + std::to_string(step.action) + " out of range");
    const std::size_t slot = s - m + i;
    const auto idx = static_cast<Eigen::Index>(slot * num_actions + step.action);
    ctx.phi(idx) = step.reward;
    ctx.phi(static_cast<Eigen::Index>(block) + idx) = 1.0;
  }
  return ctx;
}

/// Regularized least squares for a single action:
///   V = lambda I + sum phi phi^T,  b = sum r phi,  theta_hat = V^{-1} b.
struct RlsState {
  Matrix V;
  Vector b;
  Vector theta_hat;
  std::size_t n = 0;
  double lambda = 1.0;
  Eigen::LDLT<Matrix> factor;

  RlsState() = default;
  RlsState(std::size_t dim, double lambda_) : lambda(lambda_) {
    if (!(lambda_ > 0.0)) throw ConfigError("ridge lambda must be positive");
    const auto d = static_cast<Eigen::Index>(dim);
    V = lambda * Matrix::Identity(d, d);
    b = Vector::Zero(d);
    theta_hat = Vector::Zero(d);
    factor.compute(V);
  }

  Eigen::Index dim() const { return b.size(); }

  /// ||phi||_{V^{-1}}.
  double inverse_norm(const Vector& phi) const {
    return std::sqrt(std::max(0.0, phi.dot(factor.solve(phi))));
  }
};

inline void rls_update(RlsState& state, const Vector& phi, double reward) {
  if (phi.size() != state.dim()) throw UsageError("rls_update: dimension mismatch");
  state.V.noalias() += phi * phi.transpose();
  state.b.noalias() += reward * phi;
  ++state.n;
  state.factor.compute(state.V);
  if (state.factor.info() != Eigen::Success) throw NumericError("rls_update: singular system");
  state.theta_hat = state.factor.solve(state.b);
}

enum class RadiusMode { practical, theoretical };

/// Inputs to the confidence radius.
struct RadiusParams {
  double delta = 0.1;
  double R = 2.0;   // sub-Gaussian noise scale
  double S = 10.0;  // bound on ||theta_a||
  double L = 1.0;   // bound on ||phi||^2
  RadiusMode mode = RadiusMode::practical;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(R >= 0.0) || !(S >= 0.0) || !(L >= 0.0)) throw ConfigError("R, S, L must be >= 0");
  }
};

/// Context norm bound L(s, delta) = s (R_max^2 + 1) + 1.
inline double context_norm_bound(std::size_t s, double reward_max) {
  return static_cast<double>(s) * (reward_max * reward_max + 1.0) + 1.0;
}

/// R sqrt(d log((1 + n L / lambda) / (delta / 2))) + sqrt(lambda) S.
inline double practical_radius(const RlsState& state, const RadiusParams& params) {
  const double d = static_cast<double>(state.dim());
  const double n = static_cast<double>(state.n);
  const double log_term = std::log((1.0 + n * params.L / state.lambda) / (params.delta / 2.0));
  return params.R * std::sqrt(d * log_term) + std::sqrt(state.lambda) * params.S;
}

/// tau(a, s)_t = sqrt(sum_j ||phi_j||^2_{V^{-1}}) over this action's pulls.
inline double tau_term(const RlsState& state, std::span<const Vector> phi_history) {
  double acc = 0.0;
  for (const Vector& phi : phi_history) {
    const double w = state.inverse_norm(phi);
    acc += w * w;
  }
  return std::sqrt(acc);
}

/// Practical radius plus tau * sqrt(sum b_j^2), with bias values supplied by a
/// caller that has ground-truth access.
inline double theoretical_radius(const RlsState& state, const RadiusParams& params,
                                 std::span<const double> bias_history,
                                 std::span<const Vector> phi_history) {
  if (bias_history.size() != phi_history.size())
    throw UsageError("theoretical_radius: bias and context histories differ in length");
  double bias_sq = 0.0;
  for (double b : bias_history) bias_sq += b * b;
  return practical_radius(state, params) + tau_term(state, phi_history) * std::sqrt(bias_sq);
}

/// Sub-Gaussian scale of the reduction noise, sqrt(max_a c_a^T P c_a + beta_a^2 sigma_r^2).
inline double reduction_noise_scale(const CompanionLds& lds, const Matrix& P, double sigma_r) {
  double worst = 0.0;
  for (const Vector& ca : lds.c) {
    const double b = ca(0);
    worst = std::max(worst, ca.dot(P * ca) + b * b * sigma_r * sigma_r);
  }
  return std::sqrt(worst);
}

/// Tail bound on a single reward, max_a mu_a + beta_a E[z] + |beta_a| sigma_r sqrt(2 log(1/delta_r)).
inline double reward_tail_bound(std::span<const double> mu, std::span<const double> beta,
                                double latent_mean, double sigma_r, double delta_r) {
  if (!(delta_r > 0.0 && delta_r < 1.0)) throw ConfigError("delta_r must lie in (0, 1)");
  double out = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < mu.size(); ++a)
    out = std::max(out, mu[a] + beta[a] * latent_mean +
                            std::abs(beta[a]) * sigma_r * std::sqrt(2.0 * std::log(1.0 / delta_r)));
  return out;
}

/// Optimistic value max_{theta in ellipsoid} phi^T theta.
inline double ucb_score(const RlsState& state, double radius, const Vector& phi) {
  return phi.dot(state.theta_hat) + radius * state.inverse_norm(phi);
}

/// Argmax of precomputed scores, lowest index on ties.
inline std::size_t argmax_lowest(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < scores.size(); ++a)
    if (scores[a] > scores[best]) best = a;
  return best;
}

inline std::size_t larl_select(std::span<const RlsState> arms, std::span<const double> radii,
                               const Vector& phi) {
  if (arms.size() != radii.size() || arms.empty())
    throw UsageError("larl_select: need one radius per arm");
  std::vector<double> scores(arms.size());
  for (std::size_t a = 0; a < arms.size(); ++a) scores[a] = ucb_score(arms[a], radii[a], phi);
  return argmax_lowest(scores);
}

}  // namespace larkit

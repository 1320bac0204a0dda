#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "larkit/env.hpp"
#include "larkit/errors.hpp"
#include "larkit/rng.hpp"

namespace larkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Companion-form linear dynamical system equivalent to a latent AR bandit.
///
///   state        z_t = Gamma z_{t-1} + w_t,   w_t ~ N(gamma0_offset, W)
///   measurement  y_t = C z_t + v_t,           v_t ~ N(0, V)
///   reward mean  c[a]^T z_t + mu_a
///
/// The state vector is (z_t, z_{t-1}, ..., z_{t-k+1}).
struct CompanionLds {
  Matrix Gamma;
  Matrix W;
  RowVector C;
  std::vector<Vector> c;
  double V = 0.0;
  Vector gamma0_offset;

  Eigen::Index dim() const { return Gamma.rows(); }
};

inline CompanionLds to_companion(const EnvParams& params) {
  params.validate();
  const auto k = static_cast<Eigen::Index>(params.k);
  CompanionLds lds;
  lds.Gamma = Matrix::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) lds.Gamma(0, j) = params.gamma[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < k; ++i) lds.Gamma(i, i - 1) = 1.0;
  lds.W = Matrix::Zero(k, k);
  lds.W(0, 0) = params.sigma_z * params.sigma_z;
  lds.C = RowVector::Zero(k);
  lds.C(0) = 1.0;
  lds.c.reserve(params.num_actions);
  for (double b : params.beta) {
    Vector ca = Vector::Zero(k);
    ca(0) = b;
    lds.c.push_back(std::move(ca));
  }
  lds.V = params.sigma_r * params.sigma_r;
  lds.gamma0_offset = Vector::Zero(k);
  lds.gamma0_offset(0) = params.gamma0;
  return lds;
}

/// Rows C, C Gamma, ..., C Gamma^{k-1}.
inline Matrix observability_matrix(const CompanionLds& lds) {
  const Eigen::Index k = lds.dim();
  Matrix obs(k, k);
  RowVector row = lds.C;
  for (Eigen::Index i = 0; i < k; ++i) {
    obs.row(i) = row;
    row = row * lds.Gamma;
  }
  return obs;
}

/// Steady-state gain for a given error covariance: K = P C^T (C P C^T + V)^{-1}.
inline Vector kalman_gain(const CompanionLds& lds, const Matrix& P) {
  const double innovation_var = (lds.C * P * lds.C.transpose())(0, 0) + lds.V;
  if (innovation_var <= 0.0) return Vector::Zero(lds.dim());
  return P * lds.C.transpose() / innovation_var;
}

/// One application of the Riccati map
///   F(P) = Gamma P Gamma^T + W - Gamma P C^T (C P C^T + V)^{-1} C P Gamma^T.
inline Matrix riccati_map(const CompanionLds& lds, const Matrix& P) {
  const double innovation_var = (lds.C * P * lds.C.transpose())(0, 0) + lds.V;
  Matrix next = lds.Gamma * P * lds.Gamma.transpose() + lds.W;
  if (innovation_var > 0.0) {
    const Vector gpc = lds.Gamma * P * lds.C.transpose();
    next.noalias() -= gpc * gpc.transpose() / innovation_var;
  }
  return next;
}

struct DareSolution {
  Matrix P;
  Vector K;
  double residual = 0.0;  // max-norm of F(P) - P at the returned P
  long iterations = 0;
};

/// Fixed-point iteration of the Riccati map from P_0 = W, symmetrizing each step,
/// until successive iterates agree to `tol` in max-norm.
inline DareSolution solve_dare(const CompanionLds& lds, double tol = 1e-12, long max_iter = 100000) {
  if (!(tol > 0.0)) throw UsageError("solve_dare: tol must be positive");
  Matrix P = lds.W;
  double step = 0.0;
  for (long it = 1; it <= max_iter; ++it) {
    Matrix next = riccati_map(lds, P);
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) throw RiccatiDivergence(std::numeric_limits<double>::infinity(), it);
    step = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (step <= tol) {
      DareSolution sol;
      sol.residual = (riccati_map(lds, P) - P).cwiseAbs().maxCoeff();
      sol.K = kalman_gain(lds, P);
      sol.P = std::move(P);
      sol.iterations = it;
      return sol;
    }
  }
  throw RiccatiDivergence(step, max_iter);
}

/// Closed-loop predictor matrix Gamma - Gamma K C.
inline Matrix closed_loop(const CompanionLds& lds, const Vector& K) {
  return lds.Gamma - lds.Gamma * K * lds.C;
}

/// M^n by repeated squaring.
inline Matrix matrix_power(const Matrix& M, std::size_t n) {
  Matrix result = Matrix::Identity(M.rows(), M.cols());
  Matrix base = M;
  while (n > 0) {
    if (n & 1U) result = (result * base).eval();
    n >>= 1U;
    if (n > 0) base = (base * base).eval();
  }
  return result;
}

/// Steady-state Kalman predictor. z_tilde is the one-step prediction of the state.
struct SteadyKalman {
  Matrix P;
  Vector K;
  Vector z_tilde;
  double residual = 0.0;
};

/// Solves the Riccati equation. The first prediction propagates init_mean
/// (reordered newest first) one step, so it targets the state at the first decision.
inline SteadyKalman make_steady_kalman(const CompanionLds& lds, const EnvParams& params,
                                       double tol = 1e-12, long max_iter = 100000) {
  DareSolution sol = solve_dare(lds, tol, max_iter);
  SteadyKalman kf;
  kf.P = std::move(sol.P);
  kf.K = std::move(sol.K);
  kf.residual = sol.residual;
  const auto k = static_cast<Eigen::Index>(params.k);
  kf.z_tilde = Vector(k);
  for (Eigen::Index i = 0; i < k; ++i)
    kf.z_tilde(i) = params.init_mean[static_cast<std::size_t>(k - 1 - i)];
  kf.z_tilde = lds.Gamma * kf.z_tilde + lds.gamma0_offset;
  return kf;
}

/// z_t = Gamma z_{t-1} + gamma0 e_1 + Gamma K (y_{t-1} - C z_{t-1}).
inline SteadyKalman kf_step(SteadyKalman kf, const CompanionLds& lds, double y_prev) {
  const double innovation = y_prev - lds.C.dot(kf.z_tilde);
  kf.z_tilde = lds.Gamma * (kf.z_tilde + kf.K * innovation) + lds.gamma0_offset;
  return kf;
}

/// Maps an observed reward back onto the latent scale: y = (r - mu_a) / beta_a.
inline double normalize_measurement(double reward, std::size_t action, const EnvParams& params) {
  params.check_action(action);
  if (params.beta[action] == 0.0) throw ConfigError("normalize_measurement: beta is zero");
  return (reward - params.mu[action]) / params.beta[action];
}

/// Parameter vectors of the linear contextual reduction.
///
/// theta[a] is laid out like the context: an R block and an A block of s*|A|
/// entries each (oldest slot first, actions in index order within a slot),
/// then an intercept. The A block holds the negated mu-tilde coefficients so
/// that phi . theta[a] is the filter's mean prediction minus the bias term.
struct GroundTruthTheta {
  std::size_t s = 0;
  std::vector<Vector> theta;
  std::vector<Vector> g;  // g[a][j] = c_a^T (Gamma - Gamma K C)^j Gamma K
};

inline GroundTruthTheta ground_truth_theta(const CompanionLds& lds, const Vector& K,
                                           const EnvParams& params, std::size_t s) {
  const std::size_t na = params.num_actions;
  const auto block = static_cast<Eigen::Index>(s * na);
  const Matrix M = closed_loop(lds, K);
  const Vector gk = lds.Gamma * K;

  GroundTruthTheta out;
  out.s = s;
  for (std::size_t a = 0; a < na; ++a) {
    Vector g(static_cast<Eigen::Index>(s));
    // Constant contributed by the gamma0 drift over the s unrolled steps.
    double drift = 0.0;
    RowVector left = lds.c[a].transpose();
    for (std::size_t j = 0; j < s; ++j) {
      g(static_cast<Eigen::Index>(j)) = left.dot(gk);
      drift += left.dot(lds.gamma0_offset);
      left = left * M;
    }

    Vector theta = Vector::Zero(2 * block + 1);
    for (std::size_t slot = 0; slot < s; ++slot) {
      const double gj = g(static_cast<Eigen::Index>(s - 1 - slot));
      for (std::size_t b = 0; b < na; ++b) {
        const auto idx = static_cast<Eigen::Index>(slot * na + b);
        theta(idx) = gj / params.beta[b];
        theta(block + idx) = -params.mu[b] * gj / params.beta[b];
      }
    }
    theta(2 * block) = params.mu[a] + drift;
    out.theta.push_back(std::move(theta));
    out.g.push_back(std::move(g));
  }
  return out;
}

/// b_t(a, s) = c_a^T (Gamma - Gamma K C)^s z_tilde_{t-s}.
inline double bias_term(const CompanionLds& lds, const Vector& K, const Vector& z_tilde_lagged,
                        std::size_t action, std::size_t s) {
  if (action >= lds.c.size()) throw UsageError("bias_term: action out of range");
  return lds.c[action].dot(matrix_power(closed_loop(lds, K), s) * z_tilde_lagged);
}

/// Bias when only `filled` < s context slots hold data: the unrolled filter
/// stops at the earliest prediction and the drift of the empty slots is
/// removed from the intercept.
inline double warmup_bias_term(const CompanionLds& lds, const Vector& K, const Vector& z_tilde_first,
                               std::size_t action, std::size_t s, std::size_t filled) {
  if (filled >= s) throw UsageError("warmup_bias_term: window is already full");
  if (action >= lds.c.size()) throw UsageError("warmup_bias_term: action out of range");
  const Matrix M = closed_loop(lds, K);
  double missing_drift = 0.0;
  RowVector left = lds.c[action].transpose() * matrix_power(M, filled);
  const double head = left.dot(z_tilde_first);
  for (std::size_t j = filled; j < s; ++j) {
    missing_drift += left.dot(lds.gamma0_offset);
    left = left * M;
  }
  return head - missing_drift;
}

/// Largest singular value by power iteration on M^T M. Stops once the
/// eigen-residual ||A v - rho v|| falls below tol * rho.
inline double spectral_max(const Matrix& M, double tol = 1e-12, long max_iter = 200000) {
  if (!M.allFinite()) throw UsageError("spectral_max: non-finite entries");
  if (M.size() == 0) return 0.0;
  const Matrix A = M.transpose() * M;
  const Eigen::Index n = A.rows();
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = 1.0 + 0.5 * bits_to_open_unit(splitmix64(static_cast<std::uint64_t>(i) + 17));
  v.normalize();
  for (long it = 0; it < max_iter; ++it) {
    Vector Av = A * v;
    const double rho = v.dot(Av);
    if (rho <= 0.0) {
      if (Av.norm() == 0.0) return 0.0;
    }
    const double res = (Av - rho * v).norm();
    if (res <= tol * std::abs(rho)) return std::sqrt(std::max(rho, 0.0));
    const double norm = Av.norm();
    if (norm == 0.0) return 0.0;
    v = Av / norm;
  }
  throw NumericError("spectral_max: power iteration did not converge");
}

/// Largest eigenvalue modulus.
inline double spectral_radius(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(M, false);
  if (es.info() != Eigen::Success) throw NumericError("spectral_radius: eigen solve failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace larkit

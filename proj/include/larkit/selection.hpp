#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "larkit/errors.hpp"
#include "larkit/lds.hpp"
#include "larkit/linucb.hpp"

namespace larkit {

// ---------------------------------------------------------------------------
// BIC choice of the context window s from an exploration log.

struct LoggedContext {
  Vector phi;
  std::size_t action = 0;
  double reward = 0.0;
};

/// Contexts for every candidate s, all built from the same (action, reward) log.
/// Steps whose window would reach before the log start are left out.
struct ExplorationLog {
  std::size_t num_actions = 0;
  std::size_t t_prime = 0;
  std::vector<std::size_t> candidates;
  std::vector<std::vector<LoggedContext>> contexts_by_s;  // parallel to candidates
};

inline ExplorationLog make_exploration_log(std::span<const Step> steps,
                                           std::span<const std::size_t> candidates,
                                           std::size_t num_actions) {
  ExplorationLog log;
  log.num_actions = num_actions;
  log.t_prime = steps.size();
  log.candidates.assign(candidates.begin(), candidates.end());
  for (std::size_t s : candidates) {
    std::vector<LoggedContext> rows;
    for (std::size_t j = s; j < steps.size(); ++j) {
      ContextVector ctx = build_context(steps.subspan(j - s, s), s, num_actions);
      rows.push_back({std::move(ctx.phi), steps[j].action, steps[j].reward});
    }
    log.contexts_by_s.push_back(std::move(rows));
  }
  return log;
}

struct BicEntry {
  std::size_t s = 0;
  std::size_t n = 0;       // usable steps
  std::size_t params = 0;  // |A| (2 s |A| + 1)
  double rss = 0.0;
  double bic = std::numeric_limits<double>::infinity();
  bool admissible = false;  // params < n
};

struct BicSelection {
  std::size_t s = 0;
  std::vector<BicEntry> table;
};

/// Pooled in-sample residual sum of squares of per-action ridge fits.
inline double pooled_ridge_rss(std::span<const LoggedContext> rows, std::size_t num_actions,
                               double lambda) {
  if (rows.empty()) return 0.0;
  const Eigen::Index d = rows.front().phi.size();
  std::vector<Matrix> gram(num_actions, Matrix::Zero(d, d));
  std::vector<Vector> moment(num_actions, Vector::Zero(d));
  for (const auto& row : rows) {
    gram[row.action].noalias() += row.phi * row.phi.transpose();
    moment[row.action].noalias() += row.reward * row.phi;
  }
  std::vector<Vector> theta(num_actions);
  for (std::size_t a = 0; a < num_actions; ++a)
    theta[a] = (gram[a] + lambda * Matrix::Identity(d, d)).ldlt().solve(moment[a]);
  double rss = 0.0;
  for (const auto& row : rows) {
    const double e = row.reward - row.phi.dot(theta[row.action]);
    rss += e * e;
  }
  return rss;
}

/// BIC(s) = n ln(RSS/n) + p ln n with p = |A| (2 s |A| + 1). Candidates with
/// p >= n are not admissible. Ties go to the smaller s.
inline BicSelection bic_select_s(const ExplorationLog& log, double lambda) {
  if (log.candidates.empty()) throw UsageError("bic_select_s: no candidates");
  if (log.t_prime == 0) throw UsageError("bic_select_s: empty exploration log");
  BicSelection out;
  for (std::size_t i = 0; i < log.candidates.size(); ++i) {
    BicEntry e;
    e.s = log.candidates[i];
    const auto& rows = log.contexts_by_s[i];
    e.n = rows.size();
    e.params = log.num_actions * context_dim(e.s, log.num_actions);
    e.admissible = e.n > 0 && e.params < e.n;
    if (e.admissible) {
      e.rss = pooled_ridge_rss(rows, log.num_actions, lambda);
      const double n = static_cast<double>(e.n);
      const double rss = std::max(e.rss, std::numeric_limits<double>::min());
      e.bic = n * std::log(rss / n) + static_cast<double>(e.params) * std::log(n);
    }
    out.table.push_back(e);
  }
  const BicEntry* best = nullptr;
  for (const auto& e : out.table) {
    if (!e.admissible) continue;
    if (best == nullptr || e.bic < best->bic || (e.bic == best->bic && e.s < best->s)) best = &e;
  }
  if (best == nullptr) {
    out.s = *std::min_element(log.candidates.begin(), log.candidates.end());
  } else {
    out.s = best->s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ordered Lasso for choosing the AR order.

/// Euclidean projection onto {x_0 >= x_1 >= ... >= x_{d-1}} (pool adjacent violators).
inline std::vector<double> pava_nonincreasing(std::span<const double> v) {
  std::vector<double> level;
  std::vector<std::size_t> width;
  level.reserve(v.size());
  width.reserve(v.size());
  for (double x : v) {
    level.push_back(x);
    width.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] < level.back()) {
      const std::size_t w = width[width.size() - 2] + width.back();
      const double merged =
          (level[level.size() - 2] * static_cast<double>(width[width.size() - 2]) +
           level.back() * static_cast<double>(width.back())) /
          static_cast<double>(w);
      level.pop_back();
      width.pop_back();
      level.back() = merged;
      width.back() = w;
    }
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), width[b], level[b]);
  return out;
}

/// Projection onto the monotone nonnegative cone {x_0 >= ... >= x_{d-1} >= 0}.
inline Vector project_monotone_nonneg(const Vector& v) {
  std::vector<double> p = pava_nonincreasing(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = std::max(0.0, p[static_cast<std::size_t>(i)]);
  return out;
}

struct OrderedLassoFit {
  Vector theta_plus;
  Vector theta_minus;
  double lambda = 0.0;
  double step = 0.0;
  std::vector<double> objective_trace;
  long iterations = 0;

  Vector coefficients() const { return theta_plus - theta_minus; }
};

inline double ordered_lasso_objective(const Matrix& X, const Vector& y, const Vector& plus,
                                      const Vector& minus, double lambda) {
  const Vector r = y - X * (plus - minus);
  return 0.5 * r.squaredNorm() + lambda * (plus.sum() + minus.sum());
}

/// Minimizes 0.5 ||y - X (theta+ - theta-)||^2 + lambda sum(theta+ + theta-)
/// over nonincreasing nonnegative theta+ and theta- by projected proximal
/// gradient. step <= 0 picks 1 / (2 sigma_max(X)^2). Stops when the objective
/// decrease drops below tol (relative) or an iterate would not improve.
inline OrderedLassoFit ordered_lasso_fit(const Matrix& X, const Vector& y, double lambda,
                                         double step = 0.0, long max_iter = 20000,
                                         double tol = 1e-12) {
  if (X.rows() != y.size()) throw UsageError("ordered_lasso_fit: X and y disagree in rows");
  if (!X.allFinite() || !y.allFinite()) throw UsageError("ordered_lasso_fit: non-finite input");
  if (!(lambda >= 0.0)) throw UsageError("ordered_lasso_fit: lambda must be >= 0");
  if (step < 0.0) throw UsageError("ordered_lasso_fit: step must be positive");
  if (step == 0.0) {
    const double smax = spectral_max(X, 1e-10);
    if (smax == 0.0) {
      step = 1.0;
    } else {
      step = 1.0 / (2.0 * smax * smax);
    }
  }
  const Eigen::Index d = X.cols();
  OrderedLassoFit fit;
  fit.lambda = lambda;
  fit.step = step;
  fit.theta_plus = Vector::Zero(d);
  fit.theta_minus = Vector::Zero(d);
  double obj = ordered_lasso_objective(X, y, fit.theta_plus, fit.theta_minus, lambda);
  fit.objective_trace.push_back(obj);
  const Vector shift = Vector::Constant(d, step * lambda);
  for (long it = 1; it <= max_iter; ++it) {
    const Vector grad = -X.transpose() * (y - X * fit.coefficients());
    Vector plus = project_monotone_nonneg(fit.theta_plus - step * grad - shift);
    Vector minus = project_monotone_nonneg(fit.theta_minus + step * grad - shift);
    const double next = ordered_lasso_objective(X, y, plus, minus, lambda);
    if (next > obj) break;
    fit.theta_plus = std::move(plus);
    fit.theta_minus = std::move(minus);
    fit.iterations = it;
    fit.objective_trace.push_back(next);
    const double decrease = obj - next;
    obj = next;
    if (decrease <= tol * std::max(1.0, std::abs(obj))) break;
  }
  return fit;
}

/// Per-lag magnitudes sum |theta+ - theta-| over consecutive blocks of block_size.
inline std::vector<double> lag_block_magnitudes(const OrderedLassoFit& fit, std::size_t block_size) {
  if (block_size == 0) throw UsageError("block_size must be positive");
  const Vector coef = fit.coefficients();
  const std::size_t d = static_cast<std::size_t>(coef.size());
  std::vector<double> mags((d + block_size - 1) / block_size, 0.0);
  for (std::size_t j = 0; j < d; ++j) mags[j / block_size] += std::abs(coef(static_cast<Eigen::Index>(j)));
  return mags;
}

/// Deepest lag block whose magnitude exceeds threshold * (largest block
/// magnitude); 0 when the fit is identically zero.
inline std::size_t select_k_from_fit(const OrderedLassoFit& fit, double threshold,
                                     std::size_t block_size) {
  if (!(threshold > 0.0)) throw UsageError("select_k_from_fit: threshold must be positive");
  const std::vector<double> mags = lag_block_magnitudes(fit, block_size);
  const double largest = mags.empty() ? 0.0 : *std::max_element(mags.begin(), mags.end());
  if (largest <= 0.0) return 0;
  std::size_t k_hat = 0;
  for (std::size_t l = 0; l < mags.size(); ++l)
    if (mags[l] > threshold * largest) k_hat = l + 1;
  return k_hat;
}

/// Lagged design for one target action: rows are steps j >= max_lag with
/// a_j == target, columns are r_{j-l} 1[a_{j-l} = b] ordered by lag l = 1..max_lag
/// first and action b second. Columns and target are centered.
inline std::pair<Matrix, Vector> lagged_reward_design(std::span<const Step> steps,
                                                      std::size_t num_actions,
                                                      std::size_t target, std::size_t max_lag) {
  std::vector<std::size_t> rows;
  for (std::size_t j = max_lag; j < steps.size(); ++j)
    if (steps[j].action == target) rows.push_back(j);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(max_lag * num_actions);
  Matrix X = Matrix::Zero(n, d);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t j = rows[static_cast<std::size_t>(i)];
    y(i) = steps[j].reward;
    for (std::size_t l = 1; l <= max_lag; ++l) {
      const Step& past = steps[j - l];
      X(i, static_cast<Eigen::Index>((l - 1) * num_actions + past.action)) = past.reward;
    }
  }
  if (n > 0) {
    y.array() -= y.mean();
    X.rowwise() -= X.colwise().mean();
  }
  return {std::move(X), std::move(y)};
}

/// sigma_hat * sqrt(2 n log d), the usual universal Lasso penalty.
inline double universal_lasso_lambda(const Matrix& X, const Vector& y) {
  const double n = static_cast<double>(y.size());
  if (n < 2 || X.cols() == 0) return 0.0;
  const double sd = std::sqrt(y.squaredNorm() / (n - 1.0));
  return sd * std::sqrt(2.0 * n * std::log(std::max<double>(2.0, static_cast<double>(X.cols()))));
}

struct OrderSelection {
  BicSelection bic;
  std::size_t k_hat = 0;
  std::vector<std::size_t> k_hat_by_action;
  std::vector<double> lasso_lambda_by_action;
};

struct OrderSelectionOptions {
  std::vector<std::size_t> candidates{0, 1, 2, 3, 5, 8, 10, 15};
  double ridge_lambda = 1.0;
  std::size_t max_lag = 10;
  double lasso_lambda = -1.0;  // < 0: universal penalty per action
  double threshold = 1e-3;
};

/// Chooses s by BIC and the AR order by ordered Lasso from one action/reward log.
inline OrderSelection select_order(std::span<const Step> steps, std::size_t num_actions,
                                   const OrderSelectionOptions& opt) {
  if (steps.empty()) throw UsageError("select_order: empty log");
  for (const Step& s : steps)
    if (s.action >= num_actions) throw UsageError("select_order: action out of range");
  OrderSelection out;
  const ExplorationLog log = make_exploration_log(steps, opt.candidates, num_actions);
  out.bic = bic_select_s(log, opt.ridge_lambda);
  for (std::size_t a = 0; a < num_actions; ++a) {
    auto [X, y] = lagged_reward_design(steps, num_actions, a, opt.max_lag);
    std::size_t k_a = 0;
    double lam = opt.lasso_lambda;
    if (y.size() >= 2) {
      if (lam < 0.0) lam = universal_lasso_lambda(X, y);
      const OrderedLassoFit fit = ordered_lasso_fit(X, y, lam);
      k_a = select_k_from_fit(fit, opt.threshold, num_actions);
    }
    out.k_hat_by_action.push_back(k_a);
    out.lasso_lambda_by_action.push_back(lam);
    out.k_hat = std::max(out.k_hat, k_a);
  }
  return out;
}

}  // namespace larkit

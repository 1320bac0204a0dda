#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "larkit/errors.hpp"
#include "larkit/linucb.hpp"
#include "larkit/rng.hpp"
#include "larkit/selection.hpp"

namespace larkit {

/// Sequential bandit policy: select() then observe() once per step.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::size_t select() = 0;
  virtual void observe(std::size_t action, double reward) = 0;
  virtual std::string kind() const = 0;
  /// Context window in use, for agents that have one.
  virtual std::optional<std::size_t> context_window() const { return std::nullopt; }
};

/// OFUL radius without the bias term, for a d-dimensional model after n pulls.
inline double oful_radius(std::size_t d, std::size_t n, double lambda, const RadiusParams& p) {
  const double log_term =
      std::log((1.0 + static_cast<double>(n) * p.L / lambda) / (p.delta / 2.0));
  return p.R * std::sqrt(static_cast<double>(d) * log_term) + std::sqrt(lambda) * p.S;
}

// ---------------------------------------------------------------------------

struct LarlConfig {
  std::optional<std::size_t> s;  // nullopt: explore, then pick s by BIC
  double lambda = 1.0;
  double delta = 0.1;
  double R = 2.0;
  double S = 10.0;
  std::optional<double> L;  // default: context_norm_bound(s, reward_max)
  double reward_max = 2.5;
  std::size_t t_prime = 0;  // exploration length when s is chosen by BIC
  std::vector<std::size_t> candidates{0, 1, 2, 3, 5, 8, 10, 15};

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("larl: lambda must be positive");
    RadiusParams{delta, R, S, 1.0}.validate();
    if (L && !(*L >= 0.0)) throw ConfigError("larl: L must be >= 0");
    if (!s && candidates.empty()) throw ConfigError("larl: BIC needs candidate s values");
    if (!s && t_prime == 0) throw ConfigError("larl: BIC needs a positive exploration length");
  }

  RadiusParams radius_for(std::size_t window) const {
    return RadiusParams{delta, R, S, L ? *L : context_norm_bound(window, reward_max),
                        RadiusMode::practical};
  }
};

/// Latent AR LinUCB: per-action ridge regression on the last-s-steps context,
/// optimistic action choice over the confidence ellipsoids.
class LarlAgent final : public Agent {
 public:
  LarlAgent(std::size_t num_actions, LarlConfig cfg, std::uint64_t seed)
      : num_actions_(num_actions), cfg_(std::move(cfg)), rng_(seed) {
    if (num_actions_ == 0) throw ConfigError("larl: need at least one action");
    cfg_.validate();
    if (cfg_.s) commit(*cfg_.s);
  }

  std::size_t select() override {
    if (!committed_) return rng_.uniform_index(num_actions_);
    const Vector phi = current_context();
    std::vector<double> scores(num_actions_);
    for (std::size_t a = 0; a < num_actions_; ++a)
      scores[a] = ucb_score(arms_[a], practical_radius(arms_[a], radius_), phi);
    return argmax_lowest(scores);
  }

  void observe(std::size_t action, double reward) override {
    if (action >= num_actions_) throw UsageError("larl: action out of range");
    if (committed_) rls_update(arms_[action], current_context(), reward);
    history_.push_back({action, reward});
    if (!committed_ && history_.size() >= cfg_.t_prime) {
      const ExplorationLog log = make_exploration_log(history_, cfg_.candidates, num_actions_);
      bic_ = bic_select_s(log, cfg_.lambda);
      commit(bic_->s);
      replay_history();
    }
  }

  std::string kind() const override { return "larl"; }

  std::optional<std::size_t> context_window() const override {
    if (!committed_) return std::nullopt;
    return s_;
  }

  const std::vector<RlsState>& arms() const { return arms_; }
  const RadiusParams& radius_params() const { return radius_; }
  const std::optional<BicSelection>& bic() const { return bic_; }
  bool committed() const { return committed_; }

  Vector current_context() const {
    return build_context(history_, s_, num_actions_).phi;
  }

 private:
  void commit(std::size_t s) {
    s_ = s;
    radius_ = cfg_.radius_for(s);
    arms_.assign(num_actions_, RlsState(context_dim(s, num_actions_), cfg_.lambda));
    committed_ = true;
  }

  void replay_history() {
    const std::span<const Step> h(history_);
    for (std::size_t j = 0; j < h.size(); ++j) {
      const std::size_t m = std::min(s_, j);
      rls_update(arms_[h[j].action], build_context(h.subspan(j - m, m), s_, num_actions_).phi,
                 h[j].reward);
    }
  }

  std::size_t num_actions_;
  LarlConfig cfg_;
  Rng rng_;
  std::size_t s_ = 0;
  bool committed_ = false;
  RadiusParams radius_;
  std::vector<RlsState> arms_;
  std::vector<Step> history_;
  std::optional<BicSelection> bic_;
};

// ---------------------------------------------------------------------------

/// Optimistic UCB for a stationary bandit: per-arm ridge mean with the OFUL
/// radius for a one-dimensional model.
class StationaryUcb final : public Agent {
 public:
  StationaryUcb(std::size_t num_actions, double lambda, RadiusParams radius)
      : lambda_(lambda), radius_(radius), gram_(num_actions, lambda), sum_(num_actions, 0.0),
        pulls_(num_actions, 0) {
    if (num_actions == 0) throw ConfigError("stationary_ucb: need at least one action");
    if (!(lambda > 0.0)) throw ConfigError("stationary_ucb: lambda must be positive");
    radius_.validate();
  }

  std::size_t select() override {
    std::vector<double> scores(gram_.size());
    for (std::size_t a = 0; a < gram_.size(); ++a) {
      const double mean = sum_[a] / gram_[a];
      const double width = std::sqrt(1.0 / gram_[a]);
      scores[a] = mean + oful_radius(1, pulls_[a], lambda_, radius_) * width;
    }
    return argmax_lowest(scores);
  }

  void observe(std::size_t action, double reward) override {
    if (action >= gram_.size()) throw UsageError("stationary_ucb: action out of range");
    gram_[action] += 1.0;
    sum_[action] += reward;
    ++pulls_[action];
  }

  std::string kind() const override { return "stationary_ucb"; }

 private:
  double lambda_;
  RadiusParams radius_;
  std::vector<double> gram_;
  std::vector<double> sum_;
  std::vector<std::size_t> pulls_;
};

// ---------------------------------------------------------------------------

/// Sliding-window UCB: empirical means over the last `window` steps with bonus
/// scale * sqrt(xi log(min(t, window)) / n_a). Arms unseen in the window are
/// played first.
class SlidingWindowUcb final : public Agent {
 public:
  SlidingWindowUcb(std::size_t num_actions, std::size_t window, double xi, double scale = 1.0)
      : num_actions_(num_actions), window_(window), xi_(xi), scale_(scale) {
    if (num_actions == 0) throw ConfigError("sw_ucb: need at least one action");
    if (window == 0) throw ConfigError("sw_ucb: window must be positive");
    if (!(xi > 0.0) || !(scale > 0.0)) throw ConfigError("sw_ucb: xi and scale must be positive");
  }

  /// Default window ceil(4 sqrt(T log T)).
  static std::size_t default_window(std::size_t horizon) {
    const double T = static_cast<double>(std::max<std::size_t>(horizon, 2));
    return static_cast<std::size_t>(std::ceil(4.0 * std::sqrt(T * std::log(T))));
  }

  std::size_t select() override {
    const std::size_t t = history_.size() + 1;
    const std::size_t start = history_.size() > window_ ? history_.size() - window_ : 0;
    std::vector<double> sum(num_actions_, 0.0);
    std::vector<std::size_t> count(num_actions_, 0);
    for (std::size_t j = start; j < history_.size(); ++j) {
      sum[history_[j].action] += history_[j].reward;
      ++count[history_[j].action];
    }
    for (std::size_t a = 0; a < num_actions_; ++a)
      if (count[a] == 0) return a;
    const double log_t = std::log(static_cast<double>(std::min(t, window_)));
    std::vector<double> scores(num_actions_);
    for (std::size_t a = 0; a < num_actions_; ++a) {
      const double n = static_cast<double>(count[a]);
      scores[a] = sum[a] / n + scale_ * std::sqrt(xi_ * log_t / n);
    }
    return argmax_lowest(scores);
  }

  void observe(std::size_t action, double reward) override {
    if (action >= num_actions_) throw UsageError("sw_ucb: action out of range");
    history_.push_back({action, reward});
  }

  std::string kind() const override { return "sw_ucb"; }

 private:
  std::size_t num_actions_;
  std::size_t window_;
  double xi_;
  double scale_;
  std::vector<Step> history_;
};

// ---------------------------------------------------------------------------

/// Exp3 with uniform mixing: p = (1 - eta) w / sum w + eta / K and
/// w_a <- w_a exp(eta x_hat_a / K) for rewards x in [0, 1].
class Exp3 {
 public:
  Exp3(std::size_t num_actions, double eta) : weights_(num_actions, 1.0), eta_(eta) {
    if (num_actions == 0) throw ConfigError("exp3: need at least one action");
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("exp3: eta must lie in (0, 1]");
  }

  std::vector<double> probabilities() const {
    double total = 0.0;
    for (double w : weights_) total += w;
    const double K = static_cast<double>(weights_.size());
    std::vector<double> p(weights_.size());
    for (std::size_t a = 0; a < p.size(); ++a) p[a] = (1.0 - eta_) * weights_[a] / total + eta_ / K;
    return p;
  }

  std::size_t sample(Rng& rng) const {
    const std::vector<double> p = probabilities();
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t a = 0; a + 1 < p.size(); ++a) {
      acc += p[a];
      if (u < acc) return a;
    }
    return p.size() - 1;
  }

  void update(std::size_t action, double reward01) {
    if (action >= weights_.size()) throw UsageError("exp3: action out of range");
    const double x = std::clamp(reward01, 0.0, 1.0);
    const double p = probabilities()[action];
    const double K = static_cast<double>(weights_.size());
    weights_[action] *= std::exp(eta_ * (x / p) / K);
    const double top = *std::max_element(weights_.begin(), weights_.end());
    if (top > 1e200)
      for (double& w : weights_) w /= top;
  }

  void reset() { std::fill(weights_.begin(), weights_.end(), 1.0); }

 private:
  std::vector<double> weights_;
  double eta_;
};

/// Exp3 restarted every `batch` steps. Rewards are mapped from
/// [-reward_bound, reward_bound] onto [0, 1] and clipped.
class Rexp3 final : public Agent {
 public:
  Rexp3(std::size_t num_actions, std::size_t batch, double eta, double reward_bound,
        std::uint64_t seed)
      : exp3_(num_actions, eta), batch_(batch), reward_bound_(reward_bound), rng_(seed) {
    if (batch == 0) throw ConfigError("rexp3: batch must be positive");
    if (!(reward_bound > 0.0)) throw ConfigError("rexp3: reward_bound must be positive");
  }

  /// Default batch ceil(T^{2/3}).
  static std::size_t default_batch(std::size_t horizon) {
    return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(horizon), 2.0 / 3.0)));
  }

  /// min(1, sqrt(K log K / ((e - 1) batch))).
  static double default_eta(std::size_t num_actions, std::size_t batch) {
    const double K = static_cast<double>(num_actions);
    const double v = std::sqrt(K * std::log(K) / ((std::numbers::e - 1.0) * static_cast<double>(batch)));
    return std::min(1.0, std::max(v, 1e-6));
  }

  std::size_t select() override {
    if (steps_ > 0 && steps_ % batch_ == 0 && !restarted_) {
      exp3_.reset();
      restarted_ = true;
    }
    return exp3_.sample(rng_);
  }

  void observe(std::size_t action, double reward) override {
    exp3_.update(action, (reward + reward_bound_) / (2.0 * reward_bound_));
    ++steps_;
    restarted_ = false;
  }

  std::string kind() const override { return "rexp3"; }

  const Exp3& exp3() const { return exp3_; }

 private:
  Exp3 exp3_;
  std::size_t batch_;
  double reward_bound_;
  Rng rng_;
  std::size_t steps_ = 0;
  bool restarted_ = false;
};

// ---------------------------------------------------------------------------

/// AR-UCB: per-arm ridge regression of the reward on [1, r_{t-1}, ..., r_{t-p}]
/// (the observed reward stream, whatever arm produced it) with an OFUL bonus.
class ArUcb final : public Agent {
 public:
  ArUcb(std::size_t num_actions, std::size_t order, double lambda, RadiusParams radius)
      : order_(order), radius_(radius), arms_(num_actions, RlsState(order + 1, lambda)) {
    if (num_actions == 0) throw ConfigError("ar_ucb: need at least one action");
    radius_.validate();
  }

  Vector features() const {
    Vector f = Vector::Zero(static_cast<Eigen::Index>(order_ + 1));
    f(0) = 1.0;
    for (std::size_t l = 1; l <= order_ && l <= rewards_.size(); ++l)
      f(static_cast<Eigen::Index>(l)) = rewards_[rewards_.size() - l];
    return f;
  }

  std::size_t select() override {
    const Vector f = features();
    std::vector<double> scores(arms_.size());
    for (std::size_t a = 0; a < arms_.size(); ++a)
      scores[a] = ucb_score(arms_[a], practical_radius(arms_[a], radius_), f);
    return argmax_lowest(scores);
  }

  void observe(std::size_t action, double reward) override {
    if (action >= arms_.size()) throw UsageError("ar_ucb: action out of range");
    rls_update(arms_[action], features(), reward);
    rewards_.push_back(reward);
  }

  std::string kind() const override { return "ar_ucb"; }

 private:
  std::size_t order_;
  RadiusParams radius_;
  std::vector<RlsState> arms_;
  std::vector<double> rewards_;
};

}  // namespace larkit

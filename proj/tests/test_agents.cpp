#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "larkit/agents.hpp"
#include "larkit/env.hpp"

using namespace larkit;

namespace {

// Drives an agent on a fresh environment and returns its action sequence.
std::vector<std::size_t> drive(Agent& agent, const EnvParams& p, std::uint64_t seed, std::size_t T) {
  EnvState env = init_env(p, seed);
  const std::uint64_t noise = seed * 7919 + 1;
  std::vector<std::size_t> actions;
  for (std::size_t t = 0; t < T; ++t) {
    const double z = advance_latent(env, p);
    const std::size_t a = agent.select();
    actions.push_back(a);
    agent.observe(a, reward_from_noise(p, a, z, counter_normal(noise, t, a)));
  }
  return actions;
}

/// Untruncated UCB over the full history with the sliding-window bonus form.
class FullHistoryUcb final : public Agent {
 public:
  FullHistoryUcb(std::size_t na, std::size_t window, double xi)
      : sum_(na, 0.0), count_(na, 0), window_(window), xi_(xi) {}
  std::size_t select() override {
    for (std::size_t a = 0; a < sum_.size(); ++a)
      if (count_[a] == 0) return a;
    const double lt = std::log(static_cast<double>(std::min(t_ + 1, window_)));
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t a = 0; a < sum_.size(); ++a) {
      const double n = static_cast<double>(count_[a]);
      const double v = sum_[a] / n + std::sqrt(xi_ * lt / n);
      if (v > best_v) {
        best_v = v;
        best = a;
      }
    }
    return best;
  }
  void observe(std::size_t a, double r) override {
    sum_[a] += r;
    ++count_[a];
    ++t_;
  }
  std::string kind() const override { return "full_history_ucb"; }

 private:
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
  std::size_t window_;
  double xi_;
  std::size_t t_ = 0;
};

}  // namespace

TEST(Larl, ZeroWindowMatchesStationaryUcb) {
  const EnvParams p = EnvParams::with_gamma({0.9});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LarlConfig cfg;
    cfg.s = 0;
    LarlAgent larl(2, cfg, seed);
    StationaryUcb ucb(2, 1.0, cfg.radius_for(0));
    EXPECT_EQ(drive(larl, p, seed, 200), drive(ucb, p, seed, 200)) << "seed " << seed;
  }
}

TEST(Larl, RlsStateMatchesReplay) {
  const EnvParams p = EnvParams::with_gamma({0.5, 0.3});
  LarlConfig cfg;
  cfg.s = 2;
  LarlAgent larl(2, cfg, 1);
  EnvState env = init_env(p, 2);
  std::vector<Step> history;
  std::vector<RlsState> arms(2, RlsState(context_dim(2, 2), 1.0));
  for (int t = 0; t < 60; ++t) {
    const double z = advance_latent(env, p);
    const std::size_t a = larl.select();
    const double r = reward_from_noise(p, a, z, counter_normal(3, static_cast<std::uint64_t>(t), a));
    const std::size_t m = std::min<std::size_t>(2, history.size());
    rls_update(arms[a], build_context(std::span<const Step>(history).last(m), 2, 2).phi, r);
    larl.observe(a, r);
    history.push_back({a, r});
  }
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_EQ(larl.arms()[a].n, arms[a].n);
    EXPECT_LE((larl.arms()[a].theta_hat - arms[a].theta_hat).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Larl, BicExplorationThenCommit) {
  const EnvParams p = EnvParams::with_gamma({0.9});
  LarlConfig cfg;
  cfg.t_prime = 40;
  LarlAgent larl(2, cfg, 5);
  EnvState env = init_env(p, 6);
  for (int t = 0; t < 100; ++t) {
    EXPECT_EQ(larl.committed(), t >= 40);
    EXPECT_EQ(larl.context_window().has_value(), t >= 40);
    const double z = advance_latent(env, p);
    const std::size_t a = larl.select();
    larl.observe(a, reward_from_noise(p, a, z, counter_normal(6, static_cast<std::uint64_t>(t), a)));
  }
  ASSERT_TRUE(larl.bic().has_value());
  const std::size_t s = *larl.context_window();
  EXPECT_EQ(s, larl.bic()->s);
  EXPECT_NE(std::find(cfg.candidates.begin(), cfg.candidates.end(), s), cfg.candidates.end());
  std::size_t pulls = 0;
  for (const auto& arm : larl.arms()) {
    pulls += arm.n;
    EXPECT_EQ(arm.dim(), static_cast<Eigen::Index>(context_dim(s, 2)));
  }
  EXPECT_EQ(pulls, 100u);
}

TEST(Larl, ConfigErrors) {
  LarlConfig cfg;
  EXPECT_THROW(LarlAgent(2, cfg, 0), ConfigError);  // BIC without exploration length
  cfg.s = 1;
  cfg.lambda = 0.0;
  EXPECT_THROW(LarlAgent(2, cfg, 0), ConfigError);
  cfg.lambda = 1.0;
  EXPECT_THROW(LarlAgent(0, cfg, 0), ConfigError);
  LarlAgent ok(2, cfg, 0);
  EXPECT_THROW(ok.observe(2, 0.0), UsageError);
}

TEST(SlidingWindow, DefaultWindow) {
  EXPECT_EQ(SlidingWindowUcb::default_window(200),
            static_cast<std::size_t>(std::ceil(4.0 * std::sqrt(200.0 * std::log(200.0)))));
  EXPECT_EQ(SlidingWindowUcb::default_window(200), 131u);
}

TEST(SlidingWindow, LongWindowNeverTruncates) {
  const EnvParams p = EnvParams::with_gamma({0.7});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SlidingWindowUcb sw(2, 500, 0.6);
    FullHistoryUcb ref(2, 500, 0.6);
    EXPECT_EQ(drive(sw, p, seed, 200), drive(ref, p, seed, 200));
  }
}

TEST(SlidingWindow, ForgetsOldRewards) {
  SlidingWindowUcb sw(2, 3, 0.6);
  sw.observe(0, 100.0);
  sw.observe(1, 0.0);
  EXPECT_EQ(sw.select(), 0u);
  sw.observe(1, 0.0);
  sw.observe(1, 0.0);
  // arm 0 left the window
  EXPECT_EQ(sw.select(), 0u);
  sw.observe(0, -5.0);
  sw.observe(1, 1.0);
  sw.observe(1, 1.0);
  EXPECT_EQ(sw.select(), 1u);
}

TEST(SlidingWindow, ConfigErrors) {
  EXPECT_THROW(SlidingWindowUcb(2, 0, 0.6), ConfigError);
  EXPECT_THROW(SlidingWindowUcb(2, 10, 0.0), ConfigError);
  EXPECT_THROW(SlidingWindowUcb(0, 10, 0.6), ConfigError);
}

TEST(Exp3, SingleStepUpdate) {
  Exp3 exp3(2, 0.1);
  EXPECT_DOUBLE_EQ(exp3.probabilities()[0], 0.5);
  exp3.update(0, 1.0);
  // w0 = exp(0.1 * (1 / 0.5) / 2) = e^0.1, w1 = 1.
  const double e = std::exp(0.1);
  const double expected = 0.9 * e / (e + 1.0) + 0.05;
  EXPECT_NEAR(exp3.probabilities()[0], expected, 1e-15);
  EXPECT_GT(exp3.probabilities()[0], 0.5);
  EXPECT_NEAR(exp3.probabilities()[0] + exp3.probabilities()[1], 1.0, 1e-15);
}

TEST(Exp3, ConfigErrors) {
  EXPECT_THROW(Exp3(2, 0.0), ConfigError);
  EXPECT_THROW(Exp3(2, 1.5), ConfigError);
  EXPECT_THROW(Exp3(0, 0.5), ConfigError);
}

TEST(Rexp3, Defaults) {
  EXPECT_EQ(Rexp3::default_batch(200), 35u);
  EXPECT_NEAR(Rexp3::default_eta(2, 35), std::sqrt(2.0 * std::log(2.0) / ((std::exp(1.0) - 1.0) * 35.0)),
              1e-15);
  EXPECT_DOUBLE_EQ(Rexp3::default_eta(50, 1), 1.0);
}

TEST(Rexp3, LongBatchIsPlainExp3) {
  const EnvParams p = EnvParams::with_gamma({-0.8});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rexp3 rexp3(2, 1000, 0.2, 5.0, seed);
    Exp3 ref(2, 0.2);
    Rng rng(seed);
    EnvState env = init_env(p, seed);
    for (std::size_t t = 0; t < 200; ++t) {
      const double z = advance_latent(env, p);
      const std::size_t a = rexp3.select();
      ASSERT_EQ(a, ref.sample(rng));
      const double r = reward_from_noise(p, a, z, counter_normal(seed, t, a));
      rexp3.observe(a, r);
      ref.update(a, (r + 5.0) / 10.0);
    }
  }
}

TEST(Rexp3, RestartsEveryBatch) {
  Rexp3 rexp3(3, 4, 0.3, 1.0, 0);
  for (int t = 0; t < 4; ++t) {
    const std::size_t a = rexp3.select();
    rexp3.observe(a, 1.0);
  }
  double spread = 0.0;
  for (double q : rexp3.exp3().probabilities()) spread = std::max(spread, std::abs(q - 1.0 / 3.0));
  EXPECT_GT(spread, 0.0);
  rexp3.select();
  for (double q : rexp3.exp3().probabilities()) EXPECT_DOUBLE_EQ(q, 1.0 / 3.0);
}

TEST(ArUcb, FeaturesUseRecentRewards) {
  ArUcb ar(2, 3, 1.0, RadiusParams{});
  EXPECT_EQ(ar.features(), (Vector(4) << 1, 0, 0, 0).finished());
  ar.observe(0, 0.5);
  ar.observe(1, -1.0);
  EXPECT_EQ(ar.features(), (Vector(4) << 1, -1.0, 0.5, 0).finished());
  ar.observe(1, 2.0);
  ar.observe(0, 3.0);
  EXPECT_EQ(ar.features(), (Vector(4) << 1, 3.0, 2.0, -1.0).finished());
}

TEST(ArUcb, ZeroOrderMatchesStationaryUcb) {
  const EnvParams p = EnvParams::with_gamma({0.6});
  RadiusParams r;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ArUcb ar(2, 0, 1.0, r);
    StationaryUcb ucb(2, 1.0, r);
    EXPECT_EQ(drive(ar, p, seed, 150), drive(ucb, p, seed, 150));
  }
}

TEST(StationaryUcb, ConfigErrors) {
  EXPECT_THROW(StationaryUcb(0, 1.0, RadiusParams{}), ConfigError);
  EXPECT_THROW(StationaryUcb(2, -1.0, RadiusParams{}), ConfigError);
  RadiusParams bad;
  bad.R = -1.0;
  EXPECT_THROW(StationaryUcb(2, 1.0, bad), ConfigError);
}

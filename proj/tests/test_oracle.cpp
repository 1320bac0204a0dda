#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "larkit/oracle.hpp"

using namespace larkit;

TEST(Oracle, PicksLargestConditionalMean) {
  EnvParams p = EnvParams::with_gamma({0.5});
  EXPECT_EQ(oracle_action(p, 0.7), 1u);
  EXPECT_EQ(oracle_action(p, 0.0), 0u);
  EXPECT_EQ(oracle_action(p, -0.2), 0u);
  p.mu = {1.0, 0.0};
  EXPECT_EQ(oracle_action(p, 0.4), 0u);
}

TEST(Oracle, InstantaneousRegret) {
  const EnvParams p = EnvParams::with_gamma({0.5});
  EXPECT_DOUBLE_EQ(instantaneous_regret(p, 0.7, 1, 1), 0.0);
  EXPECT_NEAR(instantaneous_regret(p, 0.7, 1, 0), 1.4, 1e-15);
}

TEST(Oracle, RegretIsNonnegative) {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    EnvParams p = EnvParams::with_gamma({0.5});
    const std::size_t na = 1 + rng.uniform_index(4);
    p.num_actions = na;
    p.mu.resize(na);
    p.beta.resize(na);
    for (std::size_t a = 0; a < na; ++a) {
      p.mu[a] = rng.normal();
      p.beta[a] = rng.normal();
    }
    const double z = 3.0 * rng.normal();
    const std::size_t best = oracle_action(p, z);
    EXPECT_GE(instantaneous_regret(p, z, best, rng.uniform_index(na)), 0.0);
  }
}

TEST(RegretTrace, CumulativeIsPrefixSum) {
  RegretTrace tr;
  tr.push(1, 1, 0.0);
  tr.push(1, 0, 1.5);
  tr.push(0, 1, 0.25);
  EXPECT_EQ(tr.cumulative, (std::vector<double>{0.0, 1.5, 1.75}));
  EXPECT_EQ(tr.agent_actions, (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_EQ(tr.oracle_actions, (std::vector<std::size_t>{1, 1, 0}));
  EXPECT_DOUBLE_EQ(tr.final_regret(), 1.75);
  EXPECT_DOUBLE_EQ(RegretTrace{}.final_regret(), 0.0);
}

TEST(Intermediate, ActsOnFilterPrediction) {
  const EnvParams p = EnvParams::with_gamma({0.5, 0.2});
  const CompanionLds lds = to_companion(p);
  SteadyKalman kf = make_steady_kalman(lds, p);
  kf.z_tilde = (Vector(2) << 0.7, -3.0).finished();
  EXPECT_EQ(intermediate_action(kf, lds, p), 1u);
  kf.z_tilde(0) = -0.1;
  EXPECT_EQ(intermediate_action(kf, lds, p), 0u);
}

TEST(Intermediate, AgreesWithOracleInQuietLimit) {
  EnvParams p = EnvParams::with_gamma({0.5});
  p.gamma0 = 1.0;
  p.sigma_z = 0.0;
  p.init_mean = {-4.0};
  p.init_cov_diag = {0.0};
  EnvState env = init_env(p, 0);
  IntermediateAgent agent(p);
  Rng rng(1);
  for (int t = 0; t < 300; ++t) {
    const double z = advance_latent(env, p);
    const std::size_t a = agent.select();
    if (t >= 50) {
      EXPECT_EQ(a, oracle_action(p, z)) << t;
      EXPECT_NEAR(agent.filter().z_tilde(0), 2.0, 1e-6);
    }
    agent.observe(a, emit_reward(env, p, a, rng));
  }
}

TEST(Intermediate, GapBoundedByFilterError) {
  EnvParams p = EnvParams::with_gamma({0.5, -0.3, 0.1});
  p.mu = {0.2, -0.1};
  p.beta = {-1.5, 1.0};
  EnvState env = init_env(p, 4);
  IntermediateAgent agent(p);
  Rng rng(5);
  std::vector<double> gaps, errors;
  double cmax = 0.0;
  for (const Vector& c : agent.lds().c) cmax = std::max(cmax, c.norm());
  for (int t = 0; t < 20000; ++t) {
    const double z = advance_latent(env, p);
    Vector state(3);
    for (Eigen::Index i = 0; i < 3; ++i) state(i) = env.z_window[static_cast<std::size_t>(i)];
    errors.push_back((state - agent.filter().z_tilde).norm());
    const std::size_t a = agent.select();
    gaps.push_back(instantaneous_regret(p, z, oracle_action(p, z), a));
    agent.observe(a, emit_reward(env, p, a, rng));
  }
  auto q99 = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(0.99 * static_cast<double>(v.size() - 1))];
  };
  EXPECT_LE(q99(gaps), 2.0 * cmax * q99(errors));
}

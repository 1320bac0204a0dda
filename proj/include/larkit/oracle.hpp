#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "larkit/agents.hpp"
#include "larkit/env.hpp"
#include "larkit/lds.hpp"

namespace larkit {

/// Per-step regret against the dynamic oracle.
struct RegretTrace {
  std::vector<double> instantaneous;
  std::vector<double> cumulative;
  std::vector<std::size_t> oracle_actions;
  std::vector<std::size_t> agent_actions;

  std::size_t size() const { return instantaneous.size(); }

  void push(std::size_t oracle_a, std::size_t agent_a, double gap) {
    oracle_actions.push_back(oracle_a);
    agent_actions.push_back(agent_a);
    instantaneous.push_back(gap);
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + gap);
  }

  double final_regret() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

/// argmax_a mu_a + beta_a z, lowest index on ties.
inline std::size_t oracle_action(const EnvParams& params, double z) {
  std::size_t best = 0;
  double best_value = mean_reward(params, 0, z);
  for (std::size_t a = 1; a < params.num_actions; ++a) {
    const double v = mean_reward(params, a, z);
    if (v > best_value) {
      best = a;
      best_value = v;
    }
  }
  return best;
}

/// Conditional-mean gap between the oracle's and the agent's action.
inline double instantaneous_regret(const EnvParams& params, double z, std::size_t oracle_a,
                                   std::size_t agent_a) {
  return mean_reward(params, oracle_a, z) - mean_reward(params, agent_a, z);
}

/// argmax_a c_a^T z_tilde + mu_a, lowest index on ties.
inline std::size_t intermediate_action(const SteadyKalman& kf, const CompanionLds& lds,
                                       const EnvParams& params) {
  std::size_t best = 0;
  double best_value = lds.c[0].dot(kf.z_tilde) + params.mu[0];
  for (std::size_t a = 1; a < params.num_actions; ++a) {
    const double v = lds.c[a].dot(kf.z_tilde) + params.mu[a];
    if (v > best_value) {
      best = a;
      best_value = v;
    }
  }
  return best;
}

/// Agent with ground-truth parameters that acts on the steady-state Kalman
/// prediction of the latent state.
class IntermediateAgent final : public Agent {
 public:
  explicit IntermediateAgent(const EnvParams& params)
      : params_(params), lds_(to_companion(params)), kf_(make_steady_kalman(lds_, params_)) {}

  std::size_t select() override { return intermediate_action(kf_, lds_, params_); }

  void observe(std::size_t action, double reward) override {
    kf_ = kf_step(std::move(kf_), lds_, normalize_measurement(reward, action, params_));
  }

  std::string kind() const override { return "intermediate"; }

  const SteadyKalman& filter() const { return kf_; }
  const CompanionLds& lds() const { return lds_; }

 private:
  EnvParams params_;
  CompanionLds lds_;
  SteadyKalman kf_;
};

}  // namespace larkit

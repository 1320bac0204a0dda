#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "larkit/env.hpp"
#include "larkit/lds.hpp"
#include "larkit/linucb.hpp"

using namespace larkit;

namespace {

// Cyclic Jacobi rotations on a symmetric matrix; returns the eigenvalues.
std::vector<double> jacobi_eigenvalues(Matrix A) {
  const Eigen::Index n = A.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev;
  for (Eigen::Index i = 0; i < n; ++i) ev.push_back(A(i, i));
  return ev;
}

EnvParams random_stable(std::size_t k, Rng& rng) {
  return EnvParams::with_gamma(sample_gamma(k, 0.9, rng));
}

}  // namespace

TEST(Companion, ExactFormsForTwoLags) {
  EnvParams p = EnvParams::with_gamma({0.5, 0.3});
  p.sigma_z = 2.0;
  p.beta = {-1.0, 3.0};
  const CompanionLds lds = to_companion(p);
  Matrix G(2, 2);
  G << 0.5, 0.3, 1.0, 0.0;
  EXPECT_EQ(lds.Gamma, G);
  EXPECT_EQ(lds.C, (RowVector(2) << 1.0, 0.0).finished());
  EXPECT_EQ(lds.c[0], (Vector(2) << -1.0, 0.0).finished());
  EXPECT_EQ(lds.c[1], (Vector(2) << 3.0, 0.0).finished());
  Matrix W = Matrix::Zero(2, 2);
  W(0, 0) = 4.0;
  EXPECT_EQ(lds.W, W);
  EXPECT_DOUBLE_EQ(lds.V, 1.0);
}

TEST(Companion, ScalarCase) {
  const CompanionLds lds = to_companion(EnvParams::with_gamma({0.5}));
  ASSERT_EQ(lds.dim(), 1);
  EXPECT_DOUBLE_EQ(lds.Gamma(0, 0), 0.5);
}

TEST(Companion, ShiftedIdentityBelowFirstRow) {
  Rng rng(4);
  const CompanionLds lds = to_companion(random_stable(6, rng));
  for (Eigen::Index i = 1; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) EXPECT_EQ(lds.Gamma(i, j), j == i - 1 ? 1.0 : 0.0);
}

TEST(Companion, ObservabilityDeterminantThreeLags) {
  const double g1 = 0.4, g2 = -0.3, g3 = 0.2;
  const CompanionLds lds = to_companion(EnvParams::with_gamma({g1, g2, g3}));
  // Rows e1, e1 Gamma, e1 Gamma^2 written out by hand.
  Matrix O(3, 3);
  O << 1.0, 0.0, 0.0, g1, g2, g3, g1 * g1 + g2, g1 * g2 + g3, g1 * g3;
  EXPECT_TRUE(observability_matrix(lds).isApprox(O, 1e-15));
  const double det = 1.0 * (g2 * g1 * g3 - g3 * (g1 * g2 + g3));
  EXPECT_NEAR(observability_matrix(lds).determinant(), det, 1e-15);
  EXPECT_NEAR(det, -g3 * g3, 1e-15);
}

TEST(Companion, ObservableWheneverLastLagIsNonzero) {
  Rng rng(12);
  for (std::size_t k = 1; k <= 8; ++k) {
    const CompanionLds lds = to_companion(random_stable(k, rng));
    Eigen::FullPivLU<Matrix> lu(observability_matrix(lds));
    EXPECT_EQ(lu.rank(), static_cast<Eigen::Index>(k));
  }
}

TEST(Dare, NoDynamicsGivesW) {
  for (double V : {0.0, 0.3, 4.0}) {
    EnvParams p = EnvParams::with_gamma({0.0});
    p.sigma_r = std::sqrt(V);
    const DareSolution sol = solve_dare(to_companion(p));
    EXPECT_NEAR(sol.P(0, 0), 1.0, 1e-12);
  }
}

TEST(Dare, ScalarQuadraticRoot) {
  // P = g^2 P + 1 - g^2 P^2 / (P + 1)  <=>  P^2 - g^2 P - 1 = 0 for V = sigma_z = 1.
  const double g = 0.5;
  const double root = (g * g + std::sqrt(g * g * g * g + 4.0)) / 2.0;
  EXPECT_NEAR(root, 1.13278, 1e-5);
  const DareSolution sol = solve_dare(to_companion(EnvParams::with_gamma({g})));
  EXPECT_NEAR(sol.P(0, 0), root, 1e-10);
  EXPECT_NEAR(sol.K(0), root / (root + 1.0), 1e-10);
  EXPECT_NEAR(sol.K(0), 0.53113, 1e-5);
}

TEST(Dare, FixedPointResidualAndProperties) {
  Rng rng(31);
  for (int i = 0; i < 40; ++i) {
    const std::size_t k = 1 + static_cast<std::size_t>(i % 7);
    const CompanionLds lds = to_companion(random_stable(k, rng));
    const double tol = 1e-12;
    const DareSolution sol = solve_dare(lds, tol);
    EXPECT_LE((riccati_map(lds, sol.P) - sol.P).cwiseAbs().maxCoeff(), 10 * tol);
    EXPECT_LE((sol.P - sol.P.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(sol.P).eigenvalues().minCoeff(), -1e-9);
    EXPECT_LT(spectral_radius(closed_loop(lds, sol.K)), 1.0);
  }
}

TEST(Dare, DivergenceCarriesResidual) {
  const CompanionLds lds = to_companion(EnvParams::with_gamma({0.5, 0.3}));
  try {
    solve_dare(lds, 1e-12, 2);
    FAIL() << "expected RiccatiDivergence";
  } catch (const RiccatiDivergence& e) {
    EXPECT_GT(e.residual(), 1e-12);
    EXPECT_EQ(e.iterations(), 2);
  }
  EXPECT_THROW(solve_dare(lds, 0.0), UsageError);
}

TEST(KalmanStep, ZeroGainIsPurePrediction) {
  const CompanionLds lds = to_companion(EnvParams::with_gamma({0.5, 0.3}));
  SteadyKalman kf;
  kf.K = Vector::Zero(2);
  kf.z_tilde = (Vector(2) << 1.0, -2.0).finished();
  const Vector expected = lds.Gamma * kf.z_tilde;
  EXPECT_TRUE(kf_step(kf, lds, 123.0).z_tilde.isApprox(expected));
}

TEST(KalmanStep, ZeroInnovation) {
  EnvParams p = EnvParams::with_gamma({0.5, 0.3});
  p.gamma0 = 0.7;
  const CompanionLds lds = to_companion(p);
  SteadyKalman kf = make_steady_kalman(lds, p);
  kf.z_tilde = (Vector(2) << 1.5, -2.0).finished();
  const Vector expected = lds.Gamma * kf.z_tilde + (Vector(2) << 0.7, 0.0).finished();
  EXPECT_TRUE(kf_step(kf, lds, 1.5).z_tilde.isApprox(expected, 1e-14));
}

TEST(KalmanStep, ExactMeasurementScalar) {
  EnvParams p = EnvParams::with_gamma({0.6});
  p.gamma0 = 0.2;
  p.sigma_r = 0.0;
  const CompanionLds lds = to_companion(p);
  SteadyKalman kf = make_steady_kalman(lds, p);
  EXPECT_NEAR(kf.K(0), 1.0, 1e-12);
  kf.z_tilde(0) = -3.0;
  EXPECT_NEAR(kf_step(kf, lds, 2.5).z_tilde(0), 0.6 * 2.5 + 0.2, 1e-12);
}

TEST(KalmanStep, FirstPredictionPropagatesInitialMean) {
  EnvParams p = EnvParams::with_gamma({0.3, 0.2, 0.1});
  p.gamma0 = 0.5;
  p.init_mean = {1.0, 2.0, 3.0};
  const SteadyKalman kf = make_steady_kalman(to_companion(p), p);
  // window newest first is (3, 2, 1)
  EXPECT_TRUE(kf.z_tilde.isApprox((Vector(3) << 0.5 + 0.9 + 0.4 + 0.1, 3.0, 2.0).finished(), 1e-15));
}

TEST(Normalize, Examples) {
  EnvParams p = EnvParams::with_gamma({0.5});
  p.mu = {3.0, 0.0};
  p.beta = {2.0, 1.0};
  EXPECT_DOUBLE_EQ(normalize_measurement(5.0, 0, p), 1.0);
  EXPECT_DOUBLE_EQ(normalize_measurement(3.0, 0, p), 0.0);
  p.beta[0] = 0.0;
  EXPECT_THROW(normalize_measurement(5.0, 0, p), ConfigError);
}

TEST(Normalize, NoiselessRecoversLatent) {
  EnvParams p = EnvParams::with_gamma({0.5, 0.2});
  p.sigma_r = 0.0;
  p.mu = {1.0, -2.0};
  p.beta = {-3.0, 0.5};
  EnvState s = init_env(p, 3);
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const double z = advance_latent(s, p);
    const std::size_t a = static_cast<std::size_t>(t % 2);
    EXPECT_NEAR(normalize_measurement(emit_reward(s, p, a, rng), a, p), z, 1e-12);
  }
}

TEST(GroundTruthTheta, NoHistory) {
  EnvParams p = EnvParams::with_gamma({0.5});
  p.mu = {0.3, -0.4};
  const CompanionLds lds = to_companion(p);
  const auto gt = ground_truth_theta(lds, solve_dare(lds).K, p, 0);
  ASSERT_EQ(gt.theta[0].size(), 1);
  EXPECT_DOUBLE_EQ(gt.theta[0](0), 0.3);
  EXPECT_DOUBLE_EQ(gt.theta[1](0), -0.4);
}

TEST(GroundTruthTheta, ZeroOffsetsZeroMuBlock) {
  const EnvParams p = EnvParams::with_gamma({0.5, 0.2});
  const CompanionLds lds = to_companion(p);
  const auto gt = ground_truth_theta(lds, solve_dare(lds).K, p, 3);
  for (const Vector& th : gt.theta) {
    ASSERT_EQ(th.size(), 13);
    EXPECT_EQ(th.segment(6, 6), Vector::Zero(6));
  }
}

TEST(GroundTruthTheta, BlockLayout) {
  EnvParams p = EnvParams::with_gamma({0.5, 0.2});
  p.mu = {1.0, 2.0};
  p.beta = {-1.0, 4.0};
  const CompanionLds lds = to_companion(p);
  const Vector K = solve_dare(lds).K;
  const Matrix M = lds.Gamma - lds.Gamma * K * lds.C;
  const auto gt = ground_truth_theta(lds, K, p, 2);
  for (std::size_t a = 0; a < 2; ++a) {
    const double g0 = lds.c[a].dot(lds.Gamma * K);
    const double g1 = lds.c[a].dot(M * lds.Gamma * K);
    // Oldest slot (lag 2) first.
    const Vector expected = (Vector(9) << g1 / -1.0, g1 / 4.0, g0 / -1.0, g0 / 4.0,
                             -1.0 * g1 / -1.0, -2.0 * g1 / 4.0, -1.0 * g0 / -1.0, -2.0 * g0 / 4.0,
                             p.mu[a])
                                .finished();
    EXPECT_TRUE(gt.theta[a].isApprox(expected, 1e-14)) << gt.theta[a].transpose();
  }
}

TEST(Reduction, FilterMeanEqualsLinearModelPlusBias) {
  EnvParams p = EnvParams::with_gamma({0.4, -0.3, 0.2});
  p.gamma0 = 0.5;
  p.num_actions = 3;
  p.mu = {0.5, -1.0, 0.1};
  p.beta = {-1.0, 2.0, 0.7};
  const CompanionLds lds = to_companion(p);
  SteadyKalman kf = make_steady_kalman(lds, p);
  for (std::size_t s : {1u, 2u, 4u}) {
    const auto gt = ground_truth_theta(lds, kf.K, p, s);
    EnvState env = init_env(p, 21);
    Rng rng(22);
    SteadyKalman f = kf;
    std::vector<Vector> preds{f.z_tilde};
    std::vector<Step> history;
    for (int t = 0; t < 40; ++t) {
      const std::size_t m = std::min(s, history.size());
      const Vector phi = build_context(std::span<const Step>(history).last(m), s, 3).phi;
      for (std::size_t a = 0; a < 3; ++a) {
        const double lhs = lds.c[a].dot(f.z_tilde) + p.mu[a];
        const double bias = m == s ? bias_term(lds, f.K, preds[preds.size() - 1 - s], a, s)
                                   : warmup_bias_term(lds, f.K, preds.front(), a, s, m);
        EXPECT_NEAR(lhs, phi.dot(gt.theta[a]) + bias, 1e-10) << "s=" << s << " t=" << t;
      }
      advance_latent(env, p);
      const std::size_t a = rng.uniform_index(3);
      const double r = emit_reward(env, p, a, rng);
      history.push_back({a, r});
      f = kf_step(std::move(f), lds, normalize_measurement(r, a, p));
      preds.push_back(f.z_tilde);
    }
  }
}

TEST(Bias, ZeroWindowAndZeroState) {
  const EnvParams p = EnvParams::with_gamma({0.5, 0.2});
  const CompanionLds lds = to_companion(p);
  const Vector K = solve_dare(lds).K;
  const Vector z = (Vector(2) << 0.8, -0.1).finished();
  EXPECT_DOUBLE_EQ(bias_term(lds, K, z, 1, 0), lds.c[1].dot(z));
  EXPECT_DOUBLE_EQ(bias_term(lds, K, Vector::Zero(2), 0, 7), 0.0);
}

TEST(Bias, BoundedByClosedLoopNorm) {
  Rng rng(55);
  for (int i = 0; i < 20; ++i) {
    const EnvParams p = random_stable(4, rng);
    const CompanionLds lds = to_companion(p);
    const Vector K = solve_dare(lds).K;
    const Matrix M = closed_loop(lds, K);
    Vector z(4);
    for (Eigen::Index j = 0; j < 4; ++j) z(j) = rng.normal();
    for (std::size_t s = 1; s <= 12; ++s) {
      const double rho = spectral_max(matrix_power(M, s));
      for (std::size_t a = 0; a < 2; ++a)
        EXPECT_LE(std::abs(bias_term(lds, K, z, a, s)), lds.c[a].norm() * rho * z.norm() * (1 + 1e-9) + 1e-15);
    }
  }
}

TEST(MatrixPower, MatchesRepeatedProduct) {
  Rng rng(6);
  Matrix M(3, 3);
  for (Eigen::Index i = 0; i < 9; ++i) M(i) = rng.uniform(-0.7, 0.7);
  Matrix acc = Matrix::Identity(3, 3);
  for (std::size_t n = 0; n <= 13; ++n) {
    EXPECT_TRUE(matrix_power(M, n).isApprox(acc, 1e-12)) << n;
    acc = acc * M;
  }
}

TEST(SpectralMax, SimpleCases) {
  EXPECT_NEAR(spectral_max(Matrix::Identity(4, 4)), 1.0, 1e-12);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 1.0;
  EXPECT_NEAR(spectral_max(D), 3.0, 1e-12);
  EXPECT_EQ(spectral_max(Matrix::Zero(3, 3)), 0.0);
}

TEST(SpectralMax, MatchesJacobiEigenSolve) {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix M(5, 5);
    for (Eigen::Index i = 0; i < 25; ++i) M(i) = rng.normal();
    const auto ev = jacobi_eigenvalues(M.transpose() * M);
    const double oracle = std::sqrt(*std::max_element(ev.begin(), ev.end()));
    EXPECT_NEAR(spectral_max(M), oracle, 1e-8 * oracle);
  }
}

TEST(SpectralRadius, CompanionRoots) {
  // Eigenvalues of [[g1, g2], [1, 0]] solve x^2 - g1 x - g2 = 0.
  const double g1 = 0.5, g2 = 0.3;
  const double r1 = (g1 + std::sqrt(g1 * g1 + 4 * g2)) / 2, r2 = (g1 - std::sqrt(g1 * g1 + 4 * g2)) / 2;
  const CompanionLds lds = to_companion(EnvParams::with_gamma({g1, g2}));
  EXPECT_NEAR(spectral_radius(lds.Gamma), std::max(std::abs(r1), std::abs(r2)), 1e-12);
}

TEST(NoiseScale, UsesWorstAction) {
  EnvParams p = EnvParams::with_gamma({0.5});
  p.beta = {-1.0, 2.0};
  const CompanionLds lds = to_companion(p);
  const DareSolution sol = solve_dare(lds);
  EXPECT_NEAR(reduction_noise_scale(lds, sol.P, p.sigma_r), std::sqrt(4.0 * sol.P(0, 0) + 4.0), 1e-12);
}

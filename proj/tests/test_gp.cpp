#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "grains/gp/gp.hpp"
#include "grains/gp/hyperopt.hpp"
#include "grains/gp/periodic_gp.hpp"
#include "support/oracles.hpp"

using namespace grains;
using namespace grains::gp;

namespace {

KernelSpec periodic_white(double var, double l, double period, double noise) {
  return KernelSpec(Periodic{var, l, period}) + KernelSpec(White{noise});
}

std::vector<double> iota(std::size_t n, double first = 0.0) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = first + static_cast<double>(i);
  return t;
}

double rel_max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

}  // namespace

TEST(Kernel, PeriodicExamples) {
  const KernelSpec k(Periodic{2.5, 0.7, 13.0});
  EXPECT_DOUBLE_EQ(kernel_eval(k, 4.0, 4.0, false), 2.5);
  EXPECT_NEAR(kernel_eval(k, 4.0, 17.0, false), 2.5, 1e-12);
  EXPECT_NEAR(kernel_eval(k, 4.0, 4.0 + 3 * 13.0, false), 2.5, 1e-12);
  EXPECT_LT(kernel_eval(k, 4.0, 10.5, false), 2.5);
}

TEST(Kernel, WhiteOnlyOnTheDiagonal) {
  const KernelSpec k(White{0.3});
  EXPECT_EQ(kernel_eval(k, 1.0, 2.0, false), 0.0);
  EXPECT_EQ(kernel_eval(k, 1.0, 1.0, false), 0.0);
  EXPECT_EQ(kernel_eval(k, 1.0, 1.0, true), 0.3);
  const Eigen::MatrixXd g = gram(k, std::vector<double>{1.0, 1.0, 2.0});
  EXPECT_EQ(g(0, 1), 0.0);
  EXPECT_EQ(g(1, 1), 0.3);
}

TEST(Kernel, MatchesIndependentFormulas) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.1, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double var = U(rng), l = U(rng), period = 10 * U(rng), a = 50 * U(rng), b = 50 * U(rng);
    EXPECT_NEAR(kernel_eval(KernelSpec(Periodic{var, l, period}), a, b, false), oracle::periodic(var, l, period)(a, b),
                1e-12);
    EXPECT_NEAR(kernel_eval(KernelSpec(SquaredExp{var, l}), a, b, false), oracle::squared_exp(var, l)(a, b), 1e-12);
  }
}

TEST(Kernel, SumsFlatten) {
  const KernelSpec k = periodic_white(1, 1, 5, 0.1) + KernelSpec(SquaredExp{2, 3});
  EXPECT_EQ(k.terms.size(), 3u);
  EXPECT_DOUBLE_EQ(k.noise_variance(), 0.1);
  EXPECT_THROW(KernelSpec(Periodic{1, 0, 1}).validate(), InvalidArgument);
  EXPECT_THROW(KernelSpec().validate(), InvalidArgument);
}

TEST(Kernel, GramIsPositiveSemidefinite) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 2 + static_cast<std::size_t>(U(rng) * 62);
    KernelSpec k = draw % 2 == 0 ? KernelSpec(Periodic{0.1 + 5 * U(rng), 0.05 + 3 * U(rng), 1 + 100 * U(rng)})
                                 : KernelSpec(SquaredExp{0.1 + 5 * U(rng), 0.1 + 20 * U(rng)});
    std::vector<double> x(n);
    for (auto& v : x) v = 200 * U(rng);
    const Eigen::MatrixXd g = gram(k, x);
    const double min_ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff();
    EXPECT_GE(min_ev, -1e-9 * static_cast<double>(n)) << draw;
  }
}

TEST(GpFit, SinglePointFactor) {
  const auto fit = gp_fit(std::vector<double>{3.0}, {0.5}, periodic_white(1, 1, 10, 1), MeanPolicy::Zero);
  ASSERT_EQ(fit.factor.rows(), 1);
  EXPECT_NEAR(fit.factor(0, 0), std::sqrt(2.0), 1e-12);
}

TEST(GpFit, DuplicateInputsWithNoise) {
  const std::vector<double> x{1.0, 1.0, 1.0, 2.0};
  const auto fit = gp_fit(x, {0.1, 0.2, 0.3, 0.4}, KernelSpec(SquaredExp{1, 1}) + KernelSpec(White{0.1}));
  EXPECT_EQ(fit.jitter, 0.0);
  EXPECT_TRUE(fit.alpha.allFinite());
}

TEST(GpFit, FactorReconstructsTheGram) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 500.0);
  std::vector<double> x(200);
  std::vector<double> y(200);
  for (auto& v : x) v = U(rng);
  for (auto& v : y) v = U(rng) / 100;
  const KernelSpec k = periodic_white(1.3, 0.8, 60, 0.2);
  const auto fit = gp_fit(x, y, k);
  Eigen::MatrixXd dense(200, 200);
  const auto ok = oracle::periodic(1.3, 0.8, 60);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j) dense(i, j) = ok(x[i], x[j]) + (i == j ? 0.2 : 0.0);
  const Eigen::MatrixXd rebuilt = fit.factor * fit.factor.transpose();
  EXPECT_LE((rebuilt - dense).norm() / dense.norm(), 1e-8);
}

TEST(GpFit, RejectsMismatchedInput) {
  EXPECT_THROW(gp_fit(std::vector<double>{1, 2}, {1.0}, KernelSpec(White{1})), InvalidArgument);
  EXPECT_THROW(gp_fit(std::vector<double>{1}, {NAN}, KernelSpec(White{1})), InvalidArgument);
}

TEST(GpPredict, PriorPredictiveWithoutData) {
  const KernelSpec k = periodic_white(2.0, 1, 10, 0.5);
  const auto fit = gp_fit(std::vector<double>{}, {}, k);
  const auto post = gp_predict(fit, std::vector<double>{0.0, 3.0}, PredictTarget::Latent);
  EXPECT_EQ(post.mean[0], 0.0);
  EXPECT_NEAR(post.std[1], std::sqrt(2.0), 1e-12);
  const auto obs = gp_predict(fit, std::vector<double>{0.0});
  EXPECT_NEAR(obs.std[0], std::sqrt(2.5), 1e-12);
}

TEST(GpPredict, SinglePointHalvesTheTarget) {
  const auto fit = gp_fit(std::vector<double>{4.0}, {3.0}, periodic_white(1, 1, 10, 1), MeanPolicy::Zero);
  const auto post = gp_predict(fit, std::vector<double>{4.0}, PredictTarget::Latent);
  EXPECT_NEAR(post.mean[0], 1.5, 1e-12);
  EXPECT_NEAR(post.std[0], std::sqrt(0.5), 1e-12);
}

TEST(GpPredict, MatchesDenseOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int problem = 0; problem < 50; ++problem) {
    const std::size_t n = 5 + static_cast<std::size_t>(U(rng) * 195);
    const double var = 0.2 + 3 * U(rng), l = 0.3 + 2 * U(rng), period = 5 + 80 * U(rng), noise = 0.01 + U(rng);
    std::vector<double> x(n), y(n), t(30);
    for (auto& v : x) v = 300 * U(rng);
    for (auto& v : y) v = 4 * U(rng) - 2;
    for (auto& v : t) v = 320 * U(rng);
    for (MeanPolicy mp : {MeanPolicy::Zero, MeanPolicy::Empirical}) {
      const auto fit = gp_fit(x, y, periodic_white(var, l, period, noise), mp);
      double offset = 0.0;
      if (mp == MeanPolicy::Empirical) {
        for (double v : y) offset += v;
        offset /= double(n);
      }
      for (PredictTarget pt : {PredictTarget::Latent, PredictTarget::Observation}) {
        const auto got = gp_predict(fit, t, pt);
        const auto ref = oracle::dense_gp_1d(x, y, oracle::periodic(var, l, period), noise, t, offset,
                                             pt == PredictTarget::Observation);
        std::vector<double> got_var(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) got_var[i] = got.std[i] * got.std[i];
        EXPECT_LE(rel_max_diff(got.mean, ref.mean), 1e-8) << problem;
        EXPECT_LE(rel_max_diff(got_var, ref.var), 1e-8) << problem;
      }
    }
  }
}

TEST(GpPredict, PosteriorVarianceNeverExceedsPrior) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 100.0);
  std::vector<double> x(40), y(40), t(50);
  for (auto& v : x) v = U(rng);
  for (auto& v : y) v = U(rng) / 50;
  for (auto& v : t) v = U(rng);
  const KernelSpec k = periodic_white(1.5, 0.9, 17, 0.05);
  const auto post = gp_predict(gp_fit(x, y, k), t, PredictTarget::Latent);
  for (double s : post.std) EXPECT_LE(s * s, 1.5 + 1e-12);
}

TEST(GpPredict, NearlyNoiseFreeInterpolation) {
  const std::vector<double> x{0, 1.5, 3, 4.5, 6, 7.5};
  const std::vector<double> y{0.3, -0.2, 0.8, 0.1, -0.5, 0.4};
  const auto fit = gp_fit(x, y, KernelSpec(SquaredExp{1, 1}) + KernelSpec(White{1e-10}), MeanPolicy::Zero);
  const auto post = gp_predict(fit, x, PredictTarget::Latent);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(post.mean[i], y[i], 1e-6);
    EXPECT_LT(post.std[i], 1e-3);
  }
}

TEST(Lml, SinglePoint) {
  const double lml = log_marginal_likelihood(std::vector<double>{0.0}, {0.0}, periodic_white(1, 1, 5, 1),
                                             MeanPolicy::Zero);
  EXPECT_NEAR(lml, -0.5 * std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(Lml, MatchesDenseEvaluation) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(60), y(60);
  for (auto& v : x) v = 100 * U(rng);
  for (auto& v : y) v = U(rng);
  const auto k = oracle::periodic(1.1, 0.6, 12);
  Eigen::MatrixXd K(60, 60);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j) K(i, j) = k(x[i], x[j]) + (i == j ? 0.3 : 0.0);
  Eigen::VectorXd f = Eigen::Map<Eigen::VectorXd>(y.data(), 60);
  const auto lu = K.fullPivLu();
  const double ref = -0.5 * f.dot(lu.solve(f)) - 0.5 * std::log(lu.determinant()) - 30 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(log_marginal_likelihood(x, y, periodic_white(1.1, 0.6, 12, 0.3), MeanPolicy::Zero), ref, 1e-8);
}

TEST(Lml, DecreasesForLargeNoise) {
  const auto y = oracle::sample_periodic_white(300, 1.0, 1.0, 40, 0.1, 0.0, 8);
  const auto x = iota(300);
  double prev = INFINITY;
  for (double noise = 5.0; noise <= 500.0; noise *= 1.5) {
    const double lml = log_marginal_likelihood(x, y, periodic_white(1.0, 1.0, 29, noise));
    EXPECT_LT(lml, prev);
    prev = lml;
  }
}

TEST(Lml, GeneratingKernelBeatsDoubledPeriod) {
  int wins = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto y = oracle::sample_periodic_white(600, 1.0, 1.0, 60, 0.1, 0.0, 100 + seed);
    const auto x = iota(600);
    const double right = log_marginal_likelihood(x, y, periodic_white(1.0, 1.0, 60, 0.1));
    const double wrong = log_marginal_likelihood(x, y, periodic_white(1.0, 1.0, 120, 0.1));
    wins += right > wrong;
  }
  EXPECT_GE(wins, 9);
}

TEST(Hyperopt, NeverWorseThanInit) {
  for (int seed = 0; seed < 5; ++seed) {
    const auto y = oracle::sample_periodic_white(400, 0.8, 1.0, 50, 0.2, 5.0, 200 + seed);
    const auto x = iota(400);
    const KernelSpec init = periodic_white(0.8, 1.0, 50, 0.2);
    double v = 0.0;
    for (double a : y) v += (a - 5.0) * (a - 5.0);
    const auto bounds = default_bounds(init, v / 400, 50.0);
    const KernelSpec best = optimize_hyperparams(x, y, init, bounds);
    EXPECT_GE(log_marginal_likelihood(x, y, best), log_marginal_likelihood(x, y, init) - 1e-9);
  }
}

TEST(Hyperopt, RecoversThePeriod) {
  int ok = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto y = oracle::sample_periodic_white(2000, 1.0, 1.0, 439, 0.05, 5.0, 300 + seed);
    const auto x = iota(2000);
    const KernelSpec init = periodic_white(1.0, 1.0, 439, 0.05);
    const auto bounds = default_bounds(init, 1.0, 439.0);
    const KernelSpec best = optimize_hyperparams(x, y, init, bounds);
    ok += std::abs(best.find<Periodic>()->period - 439.0) <= 0.05 * 439.0;
  }
  EXPECT_GE(ok, 8);
}

TEST(Hyperopt, CollapsedBoundsReturnInit) {
  const auto y = oracle::sample_periodic_white(200, 1.0, 1.0, 30, 0.1, 0.0, 9);
  const auto x = iota(200);
  const KernelSpec init = periodic_white(1.0, 1.0, 30, 0.1);
  const auto flat = flatten(init);
  const KernelSpec out = optimize_hyperparams(x, y, init, ParamBounds{flat, flat});
  EXPECT_EQ(flatten(out), flat);
}

TEST(Hyperopt, RejectsInitOutsideBounds) {
  const KernelSpec init = periodic_white(1.0, 1.0, 30, 0.1);
  ParamBounds b{{2, 0.5, 20, 0.01}, {3, 2, 40, 1}};
  EXPECT_THROW(optimize_hyperparams(iota(10), std::vector<double>(10, 0.0), init, b), InvalidArgument);
}

TEST(PeriodicGp, MatchesDenseSolveOnUniformInputs) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int problem = 0; problem < 20; ++problem) {
    const std::size_t n = 50 + static_cast<std::size_t>(U(rng) * 150);
    const double var = 0.2 + 2 * U(rng), l = 0.4 + 1.5 * U(rng), period = 10 + 60 * U(rng), noise = 0.01 + U(rng);
    const double first = std::floor(1000 * U(rng));
    const auto x = iota(n, first);
    std::vector<double> y(n), t(40);
    for (auto& v : y) v = 3 + U(rng);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = first + double(n + i);
    const PeriodicWhite pw{{var, l, period}, noise};
    const auto fast = PeriodicGp::fit(x, y, pw);
    ASSERT_TRUE(fast.has_value());
    const auto got = fast->predict(t);
    const auto ref = gp_predict(gp_fit(x, y, pw.kernel()), t);
    EXPECT_LE(rel_max_diff(got.mean, ref.mean), 1e-8) << problem;
    EXPECT_LE(rel_max_diff(got.std, ref.std), 1e-8) << problem;
    EXPECT_NEAR(fast->log_marginal_likelihood(), log_marginal_likelihood(x, y, pw.kernel()),
                1e-8 * std::max(1.0, std::abs(fast->log_marginal_likelihood())));
  }
}

TEST(PeriodicGp, MatchesDenseSolveOnScatteredInputs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(120), y(120), t(25);
  for (auto& v : x) v = 400 * U(rng);
  for (auto& v : y) v = U(rng);
  for (auto& v : t) v = 450 * U(rng);
  const PeriodicWhite pw{{1.2, 0.9, 37}, 0.1};
  const auto fast = PeriodicGp::fit(x, y, pw, MeanPolicy::Zero);
  ASSERT_TRUE(fast.has_value());
  const auto got = fast->predict(t, PredictTarget::Latent);
  const auto ref = oracle::dense_gp_1d(x, y, oracle::periodic(1.2, 0.9, 37), 0.1, t, 0.0, false);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(got.mean[i], ref.mean[i], 1e-8);
    EXPECT_NEAR(got.std[i] * got.std[i], ref.var[i], 1e-8);
  }
}

TEST(PeriodicGp, DeclinesWithoutNoise) {
  EXPECT_FALSE(PeriodicGp::fit(iota(10), std::vector<double>(10, 1.0), PeriodicWhite{{1, 1, 5}, 0.0}).has_value());
}

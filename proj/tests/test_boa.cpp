#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "grains/boa.hpp"
#include "support/oracles.hpp"

using namespace grains;

namespace {

const GridSpec kGrid{{0.05, 0.05, 0.35, 0.35}, 0.01};

std::vector<StiffnessObservation> random_obs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.05, 0.35);
  std::vector<StiffnessObservation> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Pose2 p{U(rng), U(rng)};
    out.push_back({p, distance(p, {0.2, 0.2}) < 0.05 ? kPresenceLabel : kAbsenceLabel});
  }
  return out;
}

oracle::Posterior dense_field(const std::vector<StiffnessObservation>& obs, const GridSpec& grid,
                              const BoaModel& m) {
  const auto centres = grid.centers();
  auto k = [&](Pose2 a, Pose2 b) {
    const double r2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
    return m.kernel.variance * std::exp(-r2 / (2 * m.kernel.length_scale * m.kernel.length_scale));
  };
  std::vector<double> y;
  for (const auto& o : obs) y.push_back(o.value);
  return oracle::dense_gp(
      obs.size(), centres.size(), [&](std::size_t i, std::size_t j) { return k(obs[i].pos, obs[j].pos); },
      [&](std::size_t i, std::size_t j) { return k(obs[i].pos, centres[j]); },
      [&](std::size_t j) { return k(centres[j], centres[j]); }, y, m.noise_variance, 0.0, false);
}

}  // namespace

TEST(FitBoa, PriorWithoutObservations) {
  const BoaModel m;
  const StiffnessField f = export_field(fit_boa({}, m), kGrid);
  ASSERT_EQ(f.mean.size(), kGrid.cells());
  for (std::size_t i = 0; i < f.mean.size(); ++i) {
    EXPECT_EQ(f.mean[i], 0.0);
    EXPECT_NEAR(f.variance[i], m.kernel.variance, 1e-12);
  }
}

TEST(FitBoa, NoiseFreePresenceInterpolates) {
  BoaModel m;
  m.noise_variance = 1e-12;
  const Pose2 p{0.123, 0.234};
  const auto post = boa_predict(fit_boa({{p, kPresenceLabel}}, m), {p});
  EXPECT_NEAR(post.mean[0], 7.0, 1e-6);
  EXPECT_NEAR(post.std[0], 0.0, 1e-4);
}

TEST(FitBoa, SingleObservationBumpIsRadial) {
  const GridSpec g{{0.0, 0.0, 0.2, 0.2}, 0.01};
  const Pose2 centre = g.center(10 * 20 + 10);
  const StiffnessField f = export_field(fit_boa({{centre, kPresenceLabel}}, {}), g);
  const std::size_t peak = static_cast<std::size_t>(std::max_element(f.mean.begin(), f.mean.end()) - f.mean.begin());
  EXPECT_EQ(peak, 10u * 20u + 10u);
  EXPECT_NEAR(f.mean[10 * 20 + 13], f.mean[13 * 20 + 10], 1e-12);
  EXPECT_NEAR(f.mean[10 * 20 + 7], f.mean[7 * 20 + 10], 1e-12);
}

TEST(FitBoa, MatchesDenseOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const BoaModel& m : {BoaModel{}, BoaModel{{10.0, 0.04}, 0.01}, BoaModel{{2.0, 0.03}, 0.2}}) {
      const auto obs = random_obs(20, seed);
      const StiffnessField f = export_field(fit_boa(obs, m), kGrid);
      const auto ref = dense_field(obs, kGrid, m);
      for (std::size_t i = 0; i < f.mean.size(); ++i) {
        EXPECT_NEAR(f.mean[i], ref.mean[i], 1e-8);
        EXPECT_NEAR(f.variance[i], ref.var[i], 1e-8);
      }
    }
  }
}

TEST(FitBoa, MeanStaysNearTheLabelRangeWhenObservationsAreSparse) {
  // Labels a few length scales apart barely interact. Close conflicting
  // labels make the mean ring well outside [0, 7]; see the dense case below.
  const BoaModel m{{10.0, 0.04}, 0.01};
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<StiffnessObservation> obs;
    for (double x = 0.06; x < 0.35; x += 0.1) {
      for (double y = 0.06; y < 0.35; y += 0.1) obs.push_back({{x, y}, rng() % 2 ? kPresenceLabel : kAbsenceLabel});
    }
    const StiffnessField f = export_field(fit_boa(obs, m), kGrid);
    for (double v : f.mean) {
      EXPECT_GE(v, -0.5);
      EXPECT_LE(v, 7.5);
    }
  }
}

TEST(FitBoa, CloseConflictingLabelsOvershoot) {
  const BoaModel m{{10.0, 0.04}, 0.01};
  std::vector<StiffnessObservation> obs;
  for (int k = 0; k < 10; ++k) obs.push_back({{0.1 + 0.01 * k, 0.2}, kAbsenceLabel});
  obs.push_back({{0.21, 0.2}, kPresenceLabel});
  const auto post = boa_predict(fit_boa(obs, m), {{0.23, 0.2}});
  EXPECT_GT(post.mean[0], 7.5);
}

TEST(FitBoa, OrderDoesNotMatter) {
  auto obs = random_obs(25, 4);
  const StiffnessField a = export_field(fit_boa(obs, {}), kGrid);
  std::mt19937_64 rng(9);
  std::shuffle(obs.begin(), obs.end(), rng);
  const StiffnessField b = export_field(fit_boa(obs, {}), kGrid);
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    EXPECT_NEAR(a.mean[i], b.mean[i], 1e-9);
    EXPECT_NEAR(a.variance[i], b.variance[i], 1e-9);
  }
}

TEST(Dedupe, PresenceWinsOnConflict) {
  const auto out = dedupe({{{0.1, 0.1}, kAbsenceLabel}, {{0.101, 0.1}, kPresenceLabel}, {{0.2, 0.2}, 0.0}}, 0.005);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].value, kPresenceLabel);
  EXPECT_EQ(out[0].pos, (Pose2{0.1, 0.1}));
}

TEST(Ei, Examples) {
  EXPECT_EQ(ei(3.0, 0.0, 1.0), 0.0);
  EXPECT_NEAR(ei(2.0, 1.0, 2.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(ei(2.0, 1.0, 2.0), 0.39894, 1e-5);
  EXPECT_NEAR(ei(12.0, 1.0, 2.0), 10.0, 1e-6);
  EXPECT_THROW(ei(0.0, -1.0, 0.0), InvalidArgument);
}

TEST(Ei, MatchesQuadrature) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-10.0, 10.0);
  std::uniform_real_distribution<double> S(1e-3, 5.0);
  for (int i = 0; i < 300; ++i) {
    const double mu = U(rng), sigma = S(rng), y = U(rng);
    EXPECT_NEAR(ei(mu, sigma, y), oracle::ei_quadrature(mu, sigma, y), 1e-6);
  }
}

TEST(Ei, NonnegativeAndIncreasingInSigma) {
  double prev = 0.0;
  for (double s = 0.01; s < 10.0; s *= 1.3) {
    const double v = ei(7.0, s, 7.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
  for (double mu = -20; mu < 20; mu += 0.7) EXPECT_GE(ei(mu, 0.3, 1.0), 0.0);
}

TEST(NextTarget, UniformAcquisitionPicksTheFirstCell) {
  const Suggestion s = next_target({}, kGrid);
  EXPECT_EQ(s.cell, 0u);
  EXPECT_EQ(s.target, kGrid.center(0));
}

TEST(NextTarget, AvoidsANoiseFreeObservation) {
  BoaModel m;
  m.noise_variance = 1e-12;
  const std::size_t cell = 123;
  const Suggestion s = next_target({{kGrid.center(cell), kPresenceLabel}}, kGrid, m);
  EXPECT_NE(s.cell, cell);
  EXPECT_GT(s.ei, 0.0);
}

TEST(NextTarget, MatchesExhaustiveScan) {
  for (std::uint64_t seed : {6u, 7u, 8u, 9u}) {
    const auto obs = random_obs(15, seed);
    const BoaModel m;
    const Suggestion s = next_target(obs, kGrid, m);
    const auto ref = dense_field(obs, kGrid, m);
    double y_plus = 0.0;
    for (const auto& o : obs) y_plus = std::max(y_plus, o.value);
    std::vector<double> v(kGrid.cells());
    for (std::size_t i = 0; i < kGrid.cells(); ++i) {
      v[i] = oracle::ei_quadrature(ref.mean[i], std::sqrt(std::max(0.0, ref.var[i])), y_plus);
    }
    const double best_v = *std::max_element(v.begin(), v.end());
    EXPECT_NEAR(s.ei, best_v, 1e-6);
    // Far-field cells tie to within quadrature error; any of them will do.
    EXPECT_NEAR(v[s.cell], best_v, 1e-6);
  }
}

TEST(NextTarget, RandomTieBreakStaysAmongTies) {
  std::mt19937_64 rng(3);
  std::set<std::size_t> seen;
  for (int i = 0; i < 20; ++i) seen.insert(next_target({}, kGrid, {}, &rng).cell);
  EXPECT_GT(seen.size(), 1u);
}

TEST(GridSpec, Geometry) {
  EXPECT_EQ(kGrid.cols(), 30u);
  EXPECT_EQ(kGrid.rows(), 30u);
  EXPECT_NEAR(kGrid.center(31).x, 0.065, 1e-12);
  EXPECT_NEAR(kGrid.center(31).y, 0.065, 1e-12);
  EXPECT_THROW((GridSpec{{0, 0, 0.01, 0.01}, 0.005}.validate()), InvalidArgument);
}

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spreadlab/experiment.hpp"
#include "spreadlab/families.hpp"

using namespace spreadlab;

namespace {
// Root of 1 - (1-p)^4 - 4p(1-p)^3 = 0.9 by bisection.
double exact_crossing_two_subsets_of_four() {
  auto f = [](double p) { return 1 - std::pow(1 - p, 4) - 4 * p * std::pow(1 - p, 3) - 0.9; };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}
}  // namespace

TEST(CoverProbability, Boundaries) {
  const auto m = perfect_matchings(4).uniform_measure();
  EXPECT_NEAR(cover_probability_exact(m, 1.0), 1.0, 1e-15);
  EXPECT_EQ(cover_probability_exact(m, 0.0), 0.0);
  const Universe u(3);
  const DiscreteMeasure with_empty(u, {{SubsetMask(u), 0.5}, {SubsetMask(u, {0, 1}), 0.5}});
  EXPECT_NEAR(cover_probability_exact(with_empty, 0.0), 1.0, 1e-15);
}

TEST(CoverProbability, TwoSubsetsOfFour) {
  const auto m = k_uniform_family(4, 2).measure();
  EXPECT_NEAR(cover_probability_exact(m, 0.5), 11.0 / 16.0, 1e-12);
  EXPECT_NEAR(detail::cover_by_inclusion_exclusion(m, 0.5), 11.0 / 16.0, 1e-12);
}

TEST(CoverProbability, BothExactPathsMatchOracle) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto m = oracle::random_measure(seed + 900, 9, 3 + static_cast<int>(seed % 8));
    for (double p : {0.1, 0.5, 0.9}) {
      const double want = oracle::cover(oracle::raw(m), p);
      EXPECT_NEAR(detail::cover_by_universe_scan(m, p), want, 1e-12);
      EXPECT_NEAR(detail::cover_by_inclusion_exclusion(m, p), want, 1e-12);
    }
  }
}

TEST(CoverProbability, EqualsNullProbabilityOfPositiveZ) {
  const auto m = perfect_matchings(6).uniform_measure();
  EXPECT_NEAR(cover_probability_exact(m, 0.35), ExactPlanted(m, 0.35).null_cover_probability(), 1e-12);
}

TEST(CoverProbability, CapacityAndArguments) {
  const auto many = k_uniform_family(24, 1).measure();  // N = 24, M = 24
  EXPECT_THROW(cover_probability_exact(many, 0.5), CapacityError);
  const Universe u(24);
  const DiscreteMeasure few(u, {{SubsetMask(u, {0, 23}), 1.0}, {SubsetMask(u, {5}), 1.0}});
  EXPECT_NEAR(cover_probability_exact(few, 0.5), 0.5 + 0.25 - 0.125, 1e-15);
  EXPECT_THROW(cover_probability_montecarlo(few, 0.5, 99, 1), ArgumentError);
  EXPECT_THROW(cover_probability_exact(few, 1.5), ArgumentError);
}

TEST(CoverProbability, MonteCarloIntervalContainsExact) {
  for (const auto& m : {perfect_matchings(6).uniform_measure(), k_uniform_family(6, 3).measure()}) {
    for (double p : {0.3, 0.6}) {
      const auto est = cover_probability_montecarlo(m, p, 4000, 12);
      ASSERT_TRUE(est.interval);
      EXPECT_TRUE(est.interval->contains(cover_probability_exact(m, p)));
      EXPECT_TRUE(est.interval->contains(est.value));
    }
  }
}

TEST(ThresholdSweep, LeftCensoredWhenAlreadyCovered) {
  const Universe u(3);
  const DiscreteMeasure m(u, {{SubsetMask(u), 0.5}, {SubsetMask(u, {0}), 0.5}});
  const auto sweep = threshold_sweep(m, {0.2, 0.5, 0.9}, CoverMode::Exact, 0, 0);
  EXPECT_TRUE(sweep.left_censored);
  EXPECT_EQ(sweep.crossing, 0.2);
}

TEST(ThresholdSweep, RightCensoredWhenNeverReached) {
  const auto m = k_uniform_family(4, 2).measure();
  const auto sweep = threshold_sweep(m, {0.1, 0.2}, CoverMode::Exact, 0, 0);
  EXPECT_TRUE(sweep.right_censored);
}

TEST(ThresholdSweep, CrossingMatchesExactRoot) {
  const auto m = k_uniform_family(4, 2).measure();
  std::vector<double> grid;
  for (int i = 1; i < 100; ++i) grid.push_back(i / 100.0);
  const auto sweep = threshold_sweep(m, grid, CoverMode::Exact, 0, 0);
  EXPECT_FALSE(sweep.left_censored || sweep.right_censored);
  EXPECT_NEAR(sweep.crossing, exact_crossing_two_subsets_of_four(), 0.01);
  EXPECT_NEAR(sweep.r_star, 2.0, 1e-12);
  ASSERT_TRUE(sweep.normalized_crossing);
  EXPECT_NEAR(*sweep.normalized_crossing, sweep.crossing * 2.0 / std::log(2.0), 1e-12);
}

TEST(ThresholdSweep, MatchingsOfK8AreMonotoneUpToNoise) {
  const auto m = perfect_matchings(8).uniform_measure();
  std::vector<double> grid;
  for (int i = 1; i <= 12; ++i) grid.push_back(0.05 * i);
  const auto sweep = threshold_sweep(m, grid, CoverMode::MonteCarlo, 2000, 2024);
  for (std::size_t i = 1; i < sweep.points.size(); ++i) {
    const auto& a = *sweep.points[i - 1].cover.interval;
    const auto& b = *sweep.points[i].cover.interval;
    EXPECT_TRUE(b.estimate >= a.estimate || b.upper >= a.lower) << i;
    EXPECT_GE(b.estimate, 0.0);
    EXPECT_LE(b.estimate, 1.0);
  }
}

TEST(ThresholdSweep, GridValidation) {
  const auto m = k_uniform_family(4, 2).measure();
  EXPECT_THROW(threshold_sweep(m, {}, CoverMode::Exact, 0, 0), ArgumentError);
  EXPECT_THROW(threshold_sweep(m, {0.3, 0.3}, CoverMode::Exact, 0, 0), ArgumentError);
  EXPECT_THROW(threshold_sweep(m, {0.5, 0.4}, CoverMode::Exact, 0, 0), ArgumentError);
}

TEST(Wilson, KnownValuesAndEdges) {
  // 7 of 10 at 95%: closed form evaluated independently.
  const auto e = wilson_interval(7, 10);
  const double z = kZ95, n = 10, ph = 0.7;
  const double centre = (ph + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z * std::sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / (1 + z * z / n);
  EXPECT_NEAR(e.lower, centre - half, 1e-15);
  EXPECT_NEAR(e.upper, centre + half, 1e-15);
  EXPECT_EQ(wilson_interval(0, 50).lower, 0.0);
  EXPECT_EQ(wilson_interval(50, 50).upper, 1.0);
  EXPECT_THROW(wilson_interval(1, 0), ArgumentError);
  EXPECT_THROW(wilson_interval(5, 4), ArgumentError);
}

TEST(Seeds, DerivationIsDeterministicAndSpreadOut) {
  EXPECT_EQ(derive_seed(1, 0), derive_seed(1, 0));
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  Rng a(derive_seed(5, 3)), b(derive_seed(5, 3));
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
}

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spreadlab/families.hpp"
#include "spreadlab/spread.hpp"

using namespace spreadlab;

TEST(CheckSpread, PointMassFailsWithSingletonWitness) {
  const Universe u(4);
  const auto m = DiscreteMeasure::point_mass(SubsetMask(u, {0, 1}));
  const auto check = check_spread(m, 2.0);
  EXPECT_FALSE(check.passed);
  ASSERT_TRUE(check.witness.has_value());
  EXPECT_EQ(*check.witness, SubsetMask(u, {0}));
}

TEST(CheckSpread, EmptySetMeasurePassesEverywhere) {
  const Universe u(3);
  const auto m = DiscreteMeasure::point_mass(SubsetMask(u));
  for (double r : {1.0001, 2.0, 1e6, 1e300}) EXPECT_TRUE(check_spread(m, r).passed);
  const auto rep = max_spread_factor(m);
  EXPECT_TRUE(rep.unbounded);
  EXPECT_TRUE(std::isinf(rep.max_spread_factor));
  EXPECT_FALSE(rep.witness.has_value());
}

TEST(CheckSpread, MatchingsOfK4) {
  const auto m = perfect_matchings(4).uniform_measure();
  EXPECT_TRUE(check_spread(m, 1.7).passed);
  EXPECT_FALSE(check_spread(m, 1.8).passed);
}

TEST(CheckSpread, RejectsInvalidR) {
  const auto m = perfect_matchings(4).uniform_measure();
  EXPECT_THROW(check_spread(m, 1.0), ArgumentError);
  EXPECT_THROW(check_spread(m, 0.5), ArgumentError);
  EXPECT_THROW(check_spread(m, INFINITY), ArgumentError);
}

TEST(CheckSpread, CandidateBudget) {
  const auto m = perfect_matchings(4).uniform_measure();  // 3 members of size 2: 12 visits
  EXPECT_THROW(check_spread(m, 1.5, 11), CapacityError);
  EXPECT_NO_THROW(check_spread(m, 1.5, 12));
}

TEST(MaxSpreadFactor, Examples) {
  const Universe u(5);
  EXPECT_NEAR(max_spread_factor(DiscreteMeasure::point_mass(SubsetMask(u, {1, 3}))).max_spread_factor, 1.0, 1e-12);

  const auto singles = max_spread_factor(k_uniform_family(6, 1).measure());
  EXPECT_NEAR(singles.max_spread_factor, 6.0, 1e-12);
  ASSERT_TRUE(singles.witness);
  EXPECT_EQ(singles.witness->size(), 1);

  const auto mf = perfect_matchings(4);
  const auto k4 = max_spread_factor(mf.uniform_measure());
  EXPECT_NEAR(k4.max_spread_factor, std::sqrt(3.0), 1e-9);
  ASSERT_TRUE(k4.witness);
  EXPECT_TRUE(mf.family().find(*k4.witness).has_value());
}

TEST(MaxSpreadFactor, WitnessAttainsTheFactor) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto m = oracle::random_measure(seed, 9, 7);
    const auto rep = max_spread_factor(m);
    ASSERT_TRUE(rep.witness);
    const double c = containment_prob(m, *rep.witness);
    EXPECT_NEAR(c, std::pow(1.0 / rep.max_spread_factor, rep.witness->size()), 1e-9 * c);
  }
}

TEST(MaxSpreadFactor, TiesPreferSmallestThenLexicographic) {
  // Uniform on singletons: every singleton ties; {0} must be reported.
  const auto rep = max_spread_factor(k_uniform_family(5, 1).measure());
  EXPECT_EQ(*rep.witness, SubsetMask(Universe(5), {0}));
}

TEST(SpreadOracle, AgreesWithFullSubsetScan) {
  int discrepancies = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int n = 3 + static_cast<int>(seed % 8);  // 3..10
    const int members = 1 + static_cast<int>(seed % 8);
    const auto m = oracle::random_measure(seed * 7919 + 1, n, std::min(members, (1 << n) - 1));
    const auto raw = oracle::raw(m);
    const auto brute = oracle::max_spread(raw);
    const auto rep = max_spread_factor(m);
    if (std::abs(rep.max_spread_factor - brute.r_star) > 1e-9 * brute.r_star) ++discrepancies;
    for (double factor : {0.5, 0.9, 0.999, 1.001, 1.1, 2.0}) {
      const double r = brute.r_star * factor;
      if (r <= 1.0) continue;
      if (check_spread(m, r).passed != oracle::is_spread(raw, r)) ++discrepancies;
      if (check_spread(m, r).passed != (factor < 1.0)) ++discrepancies;
    }
  }
  EXPECT_EQ(discrepancies, 0);
}

TEST(SpreadOracle, AgreesAtTwelvePoints) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = oracle::random_measure(seed + 500, 12, 10);
    EXPECT_NEAR(max_spread_factor(m).max_spread_factor, oracle::max_spread(oracle::raw(m)).r_star, 1e-9);
  }
}

TEST(SpreadReport, CarriesCheckedVerdict) {
  const auto rep = spread_report(perfect_matchings(4).uniform_measure(), 1.7);
  EXPECT_EQ(rep.checked_r, std::optional<double>(1.7));
  EXPECT_EQ(rep.checked_passed, std::optional<bool>(true));
}

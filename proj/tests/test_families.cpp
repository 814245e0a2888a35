#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spreadlab/families.hpp"

using namespace spreadlab;

namespace {
double binom(int n, int r) {
  if (r < 0 || r > n) return 0.0;
  double out = 1.0;
  for (int i = 1; i <= r; ++i) out = out * (n - r + i) / i;
  return out;
}
}  // namespace

TEST(KUniform, Examples) {
  const auto fam = k_uniform_family(4, 2);
  ASSERT_TRUE(fam.materialized());
  EXPECT_EQ(fam.measure().size(), 6u);
  for (double w : fam.measure().weights()) EXPECT_NEAR(w, 1.0 / 6.0, 1e-15);

  const auto whole = k_uniform_family(5, 5);
  ASSERT_EQ(whole.measure().size(), 1u);
  EXPECT_EQ(whole.measure().support()[0], SubsetMask::full(Universe(5)));

  const auto closed = k_uniform_family(2000, 3, true);
  EXPECT_FALSE(closed.materialized());
  EXPECT_THROW((void)closed.measure(), ArgumentError);
  EXPECT_NEAR(closed.max_spread_factor().first, 2000.0 / 3.0, 1e-9);
}

TEST(KUniform, Errors) {
  EXPECT_THROW(k_uniform_family(4, 0), ArgumentError);
  EXPECT_THROW(k_uniform_family(4, 5), ArgumentError);
  EXPECT_THROW(k_uniform_family(60, 30), CapacityError);
  EXPECT_NO_THROW(k_uniform_family(60, 30, true));
}

TEST(KUniform, ContainmentMatchesEnumeration) {
  for (int n = 1; n <= 12; ++n) {
    for (int k = 1; k <= n; ++k) {
      const auto fam = k_uniform_family(n, k);
      const auto& m = fam.measure();
      for (int s = 0; s <= k; ++s) {
        std::vector<int> elems;
        for (int e = 0; e < s; ++e) elems.push_back(e);
        const double want = binom(n - s, k - s) / binom(n, k);
        EXPECT_NEAR(containment_prob(m, SubsetMask(m.universe(), elems)), want, 1e-12);
        EXPECT_NEAR(fam.containment_prob(s), want, 1e-12);
      }
      EXPECT_NEAR(fam.max_spread_factor().first, oracle::max_spread(oracle::raw(m)).r_star, 1e-9)
          << n << " " << k;
    }
  }
}

TEST(Matchings, Counts) {
  int double_factorial = 1;
  for (int n = 2; n <= 12; n += 2) {
    double_factorial *= n - 1;
    const auto mf = perfect_matchings(n);
    EXPECT_EQ(mf.family().size(), static_cast<std::size_t>(double_factorial));
    EXPECT_EQ(mf.k(), n / 2);
    EXPECT_EQ(mf.family().max_size(), n / 2);
  }
}

TEST(Matchings, Errors) {
  EXPECT_THROW(perfect_matchings(5), ArgumentError);
  EXPECT_THROW(perfect_matchings(0), ArgumentError);
  EXPECT_THROW(perfect_matchings(14), ArgumentError);
}

TEST(Matchings, EdgeIndexIsLexicographicBijection) {
  const auto mf = perfect_matchings(6);
  int id = 0;
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      EXPECT_EQ(mf.edge_id(i, j), id);
      EXPECT_EQ(mf.edge_id(j, i), id);
      EXPECT_EQ(mf.edge(id), std::make_pair(i, j));
      ++id;
    }
  }
  EXPECT_EQ(id, mf.family().universe().size());
}

TEST(Matchings, MembersArePerfectMatchings) {
  const auto mf = perfect_matchings(8);
  for (const auto& a : mf.family().members()) {
    std::vector<int> degree(8, 0);
    for (int e : a.elements()) {
      ++degree[static_cast<std::size_t>(mf.edge(e).first)];
      ++degree[static_cast<std::size_t>(mf.edge(e).second)];
    }
    for (int d : degree) EXPECT_EQ(d, 1);
  }
}

TEST(Matchings, PerEdgeContainmentIsOneOverNMinusOne) {
  for (int n : {4, 6, 8}) {
    const auto mf = perfect_matchings(n);
    const auto m = mf.uniform_measure();
    for (int e = 0; e < m.universe().size(); ++e) {
      EXPECT_NEAR(containment_prob(m, SubsetMask(m.universe(), {e})), 1.0 / (n - 1), 1e-14);
    }
  }
}

TEST(Matchings, SpreadFactors) {
  EXPECT_NEAR(max_spread_factor(perfect_matchings(4).uniform_measure()).max_spread_factor, std::sqrt(3.0), 1e-9);
  EXPECT_NEAR(max_spread_factor(perfect_matchings(6).uniform_measure()).max_spread_factor, std::cbrt(15.0), 1e-9);
}

TEST(MatchingOverlap, Examples) {
  const auto four = matching_overlap_stats(perfect_matchings(4));
  EXPECT_NEAR(four.mean, 2.0 / 3.0, 1e-12);
  const auto ten = matching_overlap_stats(perfect_matchings(10));
  EXPECT_NEAR(ten.mean, 5.0 / 9.0, 1e-12);
  EXPECT_NEAR(ten.expected_mean, 5.0 / 9.0, 1e-15);
  EXPECT_GT(ten.p_share_one, 0.2);
  EXPECT_NEAR(ten.law.total(), 1.0, 1e-12);
}

TEST(MatchingOverlap, MeanMatchesClosedFormForAllSizes) {
  for (int n = 2; n <= 10; n += 2) {
    const auto st = matching_overlap_stats(perfect_matchings(n));
    EXPECT_NEAR(st.mean, st.expected_mean, 1e-12);
    EXPECT_NEAR(st.law.total(), 1.0, 1e-12);
  }
}

TEST(Counterexample, TenVertices) {
  const auto rep = counterexample_report(10);
  EXPECT_NEAR(rep.p, std::log(10.0) / 10.0, 1e-15);
  EXPECT_GT(rep.ell_one_term, 10.0 / 9.0);
  EXPECT_TRUE(rep.ell_one_term_exceeds_threshold);
  EXPECT_TRUE(rep.unrestricted_bound_violated);
  EXPECT_TRUE(rep.truncated_finite);
  EXPECT_NEAR(rep.overlap.mean, 5.0 / 9.0, 1e-12);
  EXPECT_GT(rep.r_star_over_n, 0.0);
}

TEST(Counterexample, FourVerticesIsWellFormed) {
  const auto rep = counterexample_report(4);
  EXPECT_TRUE(std::isfinite(rep.full_second_moment));
  EXPECT_TRUE(std::isfinite(rep.ell_one_term));
  EXPECT_TRUE(rep.truncated_finite);
  EXPECT_NEAR(rep.r_star, std::sqrt(3.0), 1e-9);
}

TEST(Counterexample, EllOneTermMatchesCountsAndGrowsFromEight) {
  // P(ℓ = 1) = (n/2) D(n-2) / (n-1)!!, D(m) = matchings of K_m avoiding a fixed perfect matching.
  const std::map<int, double> share_one = {{6, 3.0 * 2 / 15}, {8, 4.0 * 8 / 105}, {10, 5.0 * 60 / 945}};
  for (const auto& [n, share] : share_one) {
    const auto rep = counterexample_report(n);
    EXPECT_NEAR(rep.overlap.p_share_one, share, 1e-12) << n;
    EXPECT_NEAR(rep.ell_one_term, share / (std::log(n) / n), 1e-12) << n;
    EXPECT_GT(rep.ell_one_term, 10.0 / 9.0) << n;
  }
  double prev = 0.0;
  for (int n : {8, 10, 12}) {
    const double term = counterexample_report(n).ell_one_term;
    EXPECT_GT(term, prev) << n;
    prev = term;
  }
}

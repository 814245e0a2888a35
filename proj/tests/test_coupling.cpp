#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spreadlab/coupling.hpp"
#include "spreadlab/families.hpp"

using namespace spreadlab;

namespace {
std::vector<CouplingTrace> run_many(const DiscreteMeasure& m, const CouplingConfig& cfg, int count) {
  std::vector<CouplingTrace> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    out.push_back(run_rounds(m, cfg, rng));
  }
  return out;
}
}  // namespace

TEST(CouplingConfig, Validation) {
  EXPECT_THROW((CouplingConfig{0.0, 1, 0}.validate()), ArgumentError);
  EXPECT_THROW((CouplingConfig{1.2, 1, 0}.validate()), ArgumentError);
  EXPECT_THROW((CouplingConfig{0.5, 0, 0}.validate()), ArgumentError);
  EXPECT_NO_THROW((CouplingConfig{1.0, 1, 0}.validate()));
}

TEST(AsymptoticDefaultQ, FeasibilityFlag) {
  const auto small = asymptotic_default_q(100.0);
  EXPECT_NEAR(small.value, 343000000.0 / 100.0, 1e-6);
  EXPECT_FALSE(small.feasible);
  EXPECT_TRUE(asymptotic_default_q(1e9).feasible);
}

TEST(DefaultRoundCount, NaturalLogCeiling) {
  EXPECT_EQ(default_round_count(1), 1);
  EXPECT_EQ(default_round_count(2), 1);
  EXPECT_EQ(default_round_count(3), 2);
  EXPECT_EQ(default_round_count(7), 2);
  EXPECT_EQ(default_round_count(8), 3);
  EXPECT_EQ(default_round_count(20), 3);
  EXPECT_EQ(default_round_count(21), 4);
}

TEST(EffectiveP, Examples) {
  EXPECT_EQ(effective_p(0.37, 1), 0.37);
  EXPECT_EQ(effective_p(1.0, 4), 1.0);
  EXPECT_NEAR(effective_p(0.1, 2), 0.19, 1e-15);
}

TEST(RunRounds, FullNoiseEmptiesImmediately) {
  const auto m = perfect_matchings(6).uniform_measure();
  Rng rng(4);
  const auto t = run_rounds(m, {1.0, 3, 0}, rng);
  EXPECT_EQ(t.rounds[0].noise, SubsetMask::full(m.universe()));
  EXPECT_TRUE(t.rounds[1].signal.empty());
  EXPECT_TRUE(t.final_set.empty());
  ASSERT_TRUE(t.cover_witness);
  EXPECT_EQ(*t.cover_witness, m.support()[0]);
}

TEST(RunRounds, EmptySetPointMass) {
  const auto m = DiscreteMeasure::point_mass(SubsetMask(Universe(5)));
  Rng rng(9);
  const auto t = run_rounds(m, {0.3, 4, 0}, rng);
  for (const auto& r : t.rounds) EXPECT_TRUE(r.signal.empty());
  EXPECT_TRUE(t.final_set.empty());
  ASSERT_TRUE(t.cover_witness);
  EXPECT_TRUE(t.cover_witness->empty());
}

TEST(RunRounds, TraceInvariantsOverManySeeds) {
  const auto m = perfect_matchings(6).uniform_measure();
  const auto traces = run_many(m, {0.9, 5, 17}, 2000);
  int failures = 0;
  for (const auto& t : traces) failures += trace_violation(m, t).has_value() ? 1 : 0;
  EXPECT_EQ(failures, 0);
}

TEST(RunRounds, TraceInvariantsWithNonemptyFinals) {
  const auto m = oracle::random_measure(73, 9, 12);
  const auto traces = run_many(m, {0.15, 4, 19}, 2000);
  int failures = 0, nonempty = 0;
  for (const auto& t : traces) {
    failures += trace_violation(m, t).has_value() ? 1 : 0;
    nonempty += t.final_set.empty() ? 0 : 1;
  }
  EXPECT_EQ(failures, 0);
  EXPECT_GT(nonempty, 100);
}

TEST(RunRounds, SameSeedSameTrace) {
  const auto m = perfect_matchings(6).uniform_measure();
  Rng a(123), b(123);
  const auto ta = run_rounds(m, {0.4, 3, 0}, a);
  const auto tb = run_rounds(m, {0.4, 3, 0}, b);
  ASSERT_EQ(ta.rounds.size(), tb.rounds.size());
  for (std::size_t i = 0; i < ta.rounds.size(); ++i) {
    EXPECT_EQ(ta.rounds[i].noise, tb.rounds[i].noise);
    EXPECT_EQ(ta.rounds[i].resample, tb.rounds[i].resample);
  }
}

TEST(RunRounds, ConditionalLawsStayInsideTheOriginalSupportSize) {
  const auto m = oracle::random_measure(61, 8, 10);
  Rng rng(62);
  const auto t = run_rounds(m, {0.5, 4, 0}, rng);
  ASSERT_EQ(t.laws.size(), 5u);
  for (const auto& law : t.laws) {
    EXPECT_LE(law.size(), m.size());
    double total = 0.0;
    for (double w : law.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SpreadPreservation, EveryRoundPassesAtRStar) {
  for (const auto& m : {perfect_matchings(6).uniform_measure(), k_uniform_family(7, 3).measure(),
                        oracle::random_measure(70, 8, 7)}) {
    const double r = max_spread_factor(m).max_spread_factor;
    const auto traces = run_many(m, {0.6, 3, 5}, 200);
    for (const auto& t : traces) {
      for (bool ok : conditional_law_spread_check(t, r)) EXPECT_TRUE(ok);
    }
  }
}

TEST(SpreadPreservation, CheckerRejectsRAboveRStar) {
  const auto m = perfect_matchings(6).uniform_measure();
  Rng rng(3);
  const auto t = run_rounds(m, {0.5, 2, 0}, rng);
  const double r = max_spread_factor(m).max_spread_factor * 1.01;
  EXPECT_FALSE(conditional_law_spread_check(t, r).front());
}

TEST(CoverFromUnion, Examples) {
  const auto m = perfect_matchings(4).uniform_measure();
  EXPECT_EQ(cover_from_union(m, SubsetMask::full(m.universe())), m.support()[0]);
  EXPECT_FALSE(cover_from_union(m, SubsetMask(m.universe())).has_value());
  EXPECT_EQ(cover_from_union(m, m.support()[2]), m.support()[2]);
  EXPECT_THROW(cover_from_union(m, SubsetMask(Universe(3))), ArgumentError);
}

TEST(RunRounds, NoiseUnionHasTheEffectiveLaw) {
  const auto m = perfect_matchings(6).uniform_measure();
  const CouplingConfig cfg{0.2, 3, 404};
  const int runs = 20000;
  const auto traces = run_many(m, cfg, runs);
  const double p = effective_p(cfg.q, cfg.rounds);
  const double sigma = std::sqrt(p * (1 - p) / runs);
  for (int e = 0; e < m.universe().size(); ++e) {
    int hits = 0;
    for (const auto& t : traces) hits += t.noise_union.contains(e) ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(hits) / runs, p, 3 * sigma) << e;
  }
}

TEST(RunRounds, FirstResampleHasThePriorMarginal) {
  const auto m = perfect_matchings(6).uniform_measure();
  const int runs = 100000;
  std::vector<int> counts(m.size(), 0);
  for (int i = 0; i < runs; ++i) {
    Rng rng(derive_seed(77, static_cast<std::uint64_t>(i)));
    ++counts[*m.family().find(run_rounds(m, {0.3, 1, 0}, rng).rounds[0].resample)];
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) tv += std::abs(counts[i] / double(runs) - m.weights()[i]);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(Shrinkage, RequiresEnoughTraces) {
  const auto m = perfect_matchings(4).uniform_measure();
  EXPECT_THROW(shrinkage_diagnostic(run_many(m, {0.5, 1, 0}, 10), 2, 0.5, 1.7), ArgumentError);
}

TEST(Shrinkage, AllEmptyTracesGiveZero) {
  const auto m = perfect_matchings(4).uniform_measure();
  const auto rep = shrinkage_diagnostic(run_many(m, {1.0, 2, 0}, 1000), 2, 1.0, std::sqrt(3.0));
  EXPECT_EQ(rep.mean_root, 0.0);
  EXPECT_TRUE(rep.within_bound);
  EXPECT_EQ(rep.nonempty.successes, 0u);
}

TEST(Shrinkage, SingleRoundMatchesExactExpectation) {
  // All members have size 3, so E|A_2| = 3 · E[|A'\V|/|A|].
  const auto m = perfect_matchings(6).uniform_measure();
  const double q = 0.5;
  const double exact = 3.0 * shrinkage_expectation_exact(m, q);
  const auto traces = run_many(m, {q, 1, 808}, 20000);
  const auto rep = shrinkage_diagnostic(traces, 3, q, max_spread_factor(m).max_spread_factor);
  EXPECT_NEAR(rep.mean_root, exact, 3 * rep.mean_root_se);
  EXPECT_LE(rep.mean_root, rep.bound);
}

TEST(Shrinkage, FirstRoundRatioMatchesExactValue) {
  const auto m = perfect_matchings(6).uniform_measure();
  const double q = 0.9;
  const double exact = shrinkage_expectation_exact(m, q);
  const auto traces = run_many(m, {q, 3, 909}, 10000);
  const auto rep = shrinkage_diagnostic(traces, 3, q, max_spread_factor(m).max_spread_factor);
  ASSERT_EQ(rep.round_ratio.size(), 3u);
  EXPECT_NEAR(rep.round_ratio[0], exact, 3 * rep.round_ratio_se[0]);
  EXPECT_GT(rep.bound_quarter, 0.0);
  EXPECT_NEAR(rep.nonempty.estimate, rep.nonempty.successes / 10000.0, 1e-15);
}

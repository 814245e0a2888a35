#pragma once

/**
 * @file spread.hpp
 * @brief Exact R-spread verification and the maximal spread factor R*.
 *
 * A measure is R-spread when pi(S ⊆ A) <= R^{-|S|} for every S. Only sets S
 * contained in some support member can have positive probability, so the scan
 * runs over the deduplicated union of subsets of support members. Each
 * member's subsets are enumerated once and its weight is added to every one,
 * which yields all containment probabilities in O(sum 2^|A|).
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spreadlab/measure.hpp"
#include "spreadlab/numeric.hpp"
#include "spreadlab/setcore.hpp"

namespace spreadlab {

/// Default cap on sum over support of 2^|A|.
inline constexpr std::uint64_t kDefaultCandidateBudget = 20'000'000;
/// Relative slack on R when comparing against a containment bound.
inline constexpr double kSpreadTolerance = 1e-9;

struct ContainmentEntry {
  SubsetMask set;
  double prob;
};

/// Containment probability of every nonempty S that lies inside some support
/// member, sorted by (|S|, mask).
inline std::vector<ContainmentEntry> containment_table(const DiscreteMeasure& m,
                                                       std::uint64_t candidate_budget = kDefaultCandidateBudget) {
  std::uint64_t work = 0;
  for (const auto& a : m.support()) {
    if (a.size() > kMaxEnumeratedBits) throw CapacityError("support member too large for subset scan");
    work += std::uint64_t{1} << a.size();
  }
  if (work > candidate_budget) {
    throw CapacityError("spread scan needs " + std::to_string(work) + " candidate visits, budget is " +
                        std::to_string(candidate_budget));
  }
  std::unordered_map<SubsetMask, numeric::CompensatedSum> acc;
  acc.reserve(static_cast<std::size_t>(work));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (const auto& s : enumerate_subsets_of(m.support()[i])) {
      if (!s.empty()) acc[s] += m.weights()[i];
    }
  }
  std::vector<ContainmentEntry> table;
  table.reserve(acc.size());
  for (const auto& [s, sum] : acc) table.push_back({s, sum.value()});
  std::sort(table.begin(), table.end(), [](const ContainmentEntry& a, const ContainmentEntry& b) {
    const int sa = a.set.size();
    const int sb = b.set.size();
    return sa != sb ? sa < sb : a.set < b.set;
  });
  return table;
}

struct SpreadCheck {
  bool passed = true;
  std::optional<SubsetMask> witness;  ///< violating set when !passed
};

struct SpreadReport {
  bool unbounded = false;  ///< support is {∅}: spread for every R
  double max_spread_factor = 0.0;
  std::optional<SubsetMask> witness;
  std::optional<double> checked_r;
  std::optional<bool> checked_passed;
};

namespace detail {
// log of the largest R the single constraint for s allows: -log(prob) / |s|.
inline double log_factor(const ContainmentEntry& e) {
  return -std::log(e.prob) / static_cast<double>(e.set.size());
}
}  // namespace detail

inline SpreadCheck check_spread(const DiscreteMeasure& m, double r,
                                std::uint64_t candidate_budget = kDefaultCandidateBudget) {
  if (!(r > 1.0) || !std::isfinite(r)) throw ArgumentError("spread check needs finite R > 1");
  const double log_r = std::log(r);
  for (const auto& entry : containment_table(m, candidate_budget)) {
    if (log_r > detail::log_factor(entry) + kSpreadTolerance) return {false, entry.set};
  }
  return {true, std::nullopt};
}

/// R* = min over nonempty S of pi(S ⊆ A)^{-1/|S|}. Ties go to the smallest |S|,
/// then the smallest mask.
inline SpreadReport max_spread_factor(const DiscreteMeasure& m,
                                      std::uint64_t candidate_budget = kDefaultCandidateBudget) {
  SpreadReport report;
  const auto table = containment_table(m, candidate_budget);
  if (table.empty()) {
    report.unbounded = true;
    report.max_spread_factor = std::numeric_limits<double>::infinity();
    return report;
  }
  std::size_t best = 0;
  double best_log = detail::log_factor(table[0]);
  for (std::size_t i = 1; i < table.size(); ++i) {
    const double v = detail::log_factor(table[i]);
    if (v < best_log - 1e-13) {
      best = i;
      best_log = v;
    }
  }
  report.max_spread_factor = std::exp(best_log);
  report.witness = table[best].set;
  return report;
}

/// max_spread_factor plus a pass/fail verdict at a caller-supplied R.
inline SpreadReport spread_report(const DiscreteMeasure& m, std::optional<double> r,
                                  std::uint64_t candidate_budget = kDefaultCandidateBudget) {
  SpreadReport report = max_spread_factor(m, candidate_budget);
  if (r) {
    report.checked_r = *r;
    report.checked_passed = check_spread(m, *r, candidate_budget).passed;
  }
  return report;
}

}  // namespace spreadlab

#pragma once

/**
 * @file experiment.hpp
 * @brief Cover probabilities Q_p(V contains a support member) and threshold sweeps.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spreadlab/measure.hpp"
#include "spreadlab/numeric.hpp"
#include "spreadlab/planted.hpp"
#include "spreadlab/random.hpp"
#include "spreadlab/setcore.hpp"
#include "spreadlab/spread.hpp"
#include "spreadlab/stats.hpp"

namespace spreadlab {

enum class CoverMode { Exact, MonteCarlo };

inline constexpr int kMaxInclusionExclusionMembers = 20;
inline constexpr std::uint64_t kMinMonteCarloReplicates = 100;

struct CoverEstimate {
  CoverMode mode = CoverMode::Exact;
  double value = 0.0;
  std::optional<ProportionEstimate> interval;  ///< Monte Carlo only
};

namespace detail {
// Sum of Q_p(V) over all V ⊇ some member, via an upward-closure pass over 2^N.
inline double cover_by_universe_scan(const DiscreteMeasure& m, double p) {
  const int n = m.universe().size();
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<unsigned char> covered(count, 0);
  for (const auto& a : m.support()) covered[a.low_word()] = 1;
  for (int bit = 0; bit < n; ++bit) {
    const std::uint64_t b = std::uint64_t{1} << bit;
    for (std::uint64_t v = 0; v < count; ++v) {
      if ((v & b) != 0 && covered[v ^ b]) covered[v] = 1;
    }
  }
  const auto table = numeric::biased_weight_table(n, p);
  numeric::CompensatedSum acc;
  for (std::uint64_t v = 0; v < count; ++v) {
    if (covered[v]) acc += table[static_cast<std::size_t>(std::popcount(v))];
  }
  return acc.value();
}

// Inclusion–exclusion over the support: Σ_{J ≠ ∅} (-1)^{|J|+1} p^{|∪J|}.
inline double cover_by_inclusion_exclusion(const DiscreteMeasure& m, double p) {
  const auto& support = m.support();
  const std::size_t count = support.size();
  numeric::CompensatedSum acc;
  std::vector<SubsetMask> unions(count + 1, SubsetMask(m.universe()));
  // Depth-first over index subsets in increasing order; unions[d] is the union at depth d.
  std::vector<std::size_t> stack;
  std::size_t next = 0;
  while (true) {
    if (next < count) {
      const std::size_t depth = stack.size();
      unions[depth + 1] = unions[depth].or_with(support[next]);
      stack.push_back(next);
      const double term = std::pow(p, unions[depth + 1].size());
      acc += (stack.size() % 2 == 1) ? term : -term;
      ++next;
    } else {
      if (stack.empty()) break;
      next = stack.back() + 1;
      stack.pop_back();
    }
  }
  return acc.value();
}
}  // namespace detail

/// Q_p(∃ A ∈ supp pi: A ⊆ V). Exact mode scans 2^N when N <= 20, otherwise
/// uses inclusion–exclusion when M <= 20. p = 0 is accepted.
inline double cover_probability_exact(const DiscreteMeasure& m, double p) {
  numeric::require_probability(p, "p", /*allow_zero=*/true);
  if (m.universe().size() <= kMaxExactUniverse) return detail::cover_by_universe_scan(m, p);
  if (static_cast<int>(m.size()) <= kMaxInclusionExclusionMembers) return detail::cover_by_inclusion_exclusion(m, p);
  throw CapacityError("exact cover probability needs N <= " + std::to_string(kMaxExactUniverse) + " or M <= " +
                      std::to_string(kMaxInclusionExclusionMembers));
}

inline bool covers_some_member(const DiscreteMeasure& m, const SubsetMask& v) {
  for (const auto& a : m.support()) {
    if (a.within(v)) return true;
  }
  return false;
}

/// Monte Carlo estimate with a 95% Wilson interval. Replicate i draws from
/// Rng(derive_seed(seed, i)).
inline CoverEstimate cover_probability_montecarlo(const DiscreteMeasure& m, double p, std::uint64_t replicates,
                                                  std::uint64_t seed) {
  numeric::require_probability(p, "p", /*allow_zero=*/true);
  if (replicates < kMinMonteCarloReplicates) {
    throw ArgumentError("Monte Carlo cover probability needs >= " + std::to_string(kMinMonteCarloReplicates) +
                        " replicates");
  }
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < replicates; ++i) {
    Rng rng(derive_seed(seed, i));
    if (covers_some_member(m, sample_biased(m.universe(), p, rng))) ++hits;
  }
  CoverEstimate out;
  out.mode = CoverMode::MonteCarlo;
  out.interval = wilson_interval(hits, replicates);
  out.value = out.interval->estimate;
  return out;
}

inline CoverEstimate cover_probability(const DiscreteMeasure& m, double p, CoverMode mode,
                                       std::uint64_t replicates = 0, std::uint64_t seed = 0) {
  if (mode == CoverMode::Exact) return {CoverMode::Exact, cover_probability_exact(m, p), std::nullopt};
  return cover_probability_montecarlo(m, p, replicates, seed);
}

struct SweepPoint {
  double p = 0.0;
  CoverEstimate cover;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double target = 0.9;
  double crossing = 0.0;      ///< interpolated p at which the cover probability reaches target
  bool left_censored = false;   ///< already >= target at the first grid point
  bool right_censored = false;  ///< never reaches target on the grid
  double r_star = 0.0;
  int k = 0;
  std::optional<double> normalized_crossing;  ///< crossing · R* / ln k, when k >= 2
};

/// Evaluates the cover probability along a strictly increasing grid and
/// locates the target crossing on the running maximum of the estimates, with
/// linear interpolation between the bracketing grid points.
inline SweepResult threshold_sweep(const DiscreteMeasure& m, const std::vector<double>& grid, CoverMode mode,
                                   std::uint64_t replicates, std::uint64_t seed, double target = 0.9) {
  if (grid.empty()) throw ArgumentError("threshold sweep needs a nonempty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ArgumentError("sweep grid must be strictly increasing");
  }
  SweepResult out;
  out.target = target;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.points.push_back({grid[i], cover_probability(m, grid[i], mode, replicates, derive_seed(seed, i))});
  }
  std::vector<double> envelope;
  double running = 0.0;
  for (const auto& pt : out.points) {
    running = std::max(running, pt.cover.value);
    envelope.push_back(running);
  }
  const auto hit = std::find_if(envelope.begin(), envelope.end(), [&](double v) { return v >= target; });
  if (hit == envelope.end()) {
    out.right_censored = true;
    out.crossing = grid.back();
  } else if (hit == envelope.begin()) {
    out.left_censored = true;
    out.crossing = grid.front();
  } else {
    const auto i = static_cast<std::size_t>(hit - envelope.begin());
    const double c0 = envelope[i - 1];
    const double c1 = envelope[i];
    out.crossing = grid[i - 1] + (target - c0) / (c1 - c0) * (grid[i] - grid[i - 1]);
  }
  const auto spread = max_spread_factor(m);
  out.r_star = spread.max_spread_factor;
  out.k = m.max_size();
  if (out.k >= 2 && !spread.unbounded) out.normalized_crossing = out.crossing * out.r_star / std::log(out.k);
  return out;
}

}  // namespace spreadlab

#pragma once

/**
 * @file families.hpp
 * @brief Generators for uniform k-subset families and perfect matchings of K_n,
 *        with exact overlap statistics for the matching counterexample.
 */

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spreadlab/measure.hpp"
#include "spreadlab/moments.hpp"
#include "spreadlab/numeric.hpp"
#include "spreadlab/setcore.hpp"
#include "spreadlab/spread.hpp"

namespace spreadlab {

/// Default cap on materialized family size.
inline constexpr std::uint64_t kDefaultFamilyBudget = 2'000'000;
inline constexpr int kMaxMatchingVertices = 12;

/// Uniform measure on all k-subsets of an N-set. In closed-form-only mode the
/// members are not materialized and N may exceed the mask capacity.
class KUniformFamily {
 public:
  KUniformFamily(int universe_size, int k, bool closed_form_only = false,
                 std::uint64_t family_budget = kDefaultFamilyBudget)
      : n_(universe_size), k_(k) {
    if (k < 1 || k > universe_size) {
      throw ArgumentError("k-uniform family needs 1 <= k <= N, got N=" + std::to_string(universe_size) +
                          " k=" + std::to_string(k));
    }
    if (closed_form_only) return;
    const double count = std::exp(numeric::log_binomial(universe_size, k));
    if (count > static_cast<double>(family_budget)) {
      throw CapacityError("C(" + std::to_string(universe_size) + "," + std::to_string(k) +
                          ") members exceed the family budget; use closed-form-only mode");
    }
    Universe u(universe_size);
    SetFamily family(u);
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
      family.add(SubsetMask(u, idx));
      int pos = k - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == universe_size - k + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (int j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
    measure_ = DiscreteMeasure::uniform(family);
  }

  [[nodiscard]] int universe_size() const { return n_; }
  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] bool materialized() const { return measure_.has_value(); }
  [[nodiscard]] const DiscreteMeasure& measure() const {
    if (!measure_) throw ArgumentError("k-uniform family was built in closed-form-only mode");
    return *measure_;
  }

  /// C(N-s, k-s) / C(N, k) for a set of size s.
  [[nodiscard]] double containment_prob(int s) const {
    if (s < 0) throw ArgumentError("set size must be >= 0");
    if (s > k_) return 0.0;
    return std::exp(log_containment(s));
  }

  [[nodiscard]] IntersectionLaw intersection_law() const { return hypergeometric_intersection_law(n_, k_); }

  /// R* and the witness size s minimizing containment_prob(s)^{-1/s}.
  [[nodiscard]] std::pair<double, int> max_spread_factor() const {
    double best = std::numeric_limits<double>::infinity();
    int best_s = 1;
    for (int s = 1; s <= k_; ++s) {
      const double lf = -log_containment(s) / s;
      if (lf < best - 1e-13) {
        best = lf;
        best_s = s;
      }
    }
    return {std::exp(best), best_s};
  }

 private:
  // log of k(k-1)...(k-s+1) / N(N-1)...(N-s+1)
  [[nodiscard]] double log_containment(int s) const {
    double acc = 0.0;
    for (int i = 0; i < s; ++i) acc += std::log(static_cast<double>(k_ - i) / (n_ - i));
    return acc;
  }

  int n_;
  int k_;
  std::optional<DiscreteMeasure> measure_;
};

inline KUniformFamily k_uniform_family(int universe_size, int k, bool closed_form_only = false) {
  return KUniformFamily(universe_size, k, closed_form_only);
}

enum class MomentPath { Automatic, PairLoop, ClosedForm };

/// Moment report for a k-uniform family, by pair loop or hypergeometric law.
/// Automatic uses the closed form unless only the pair loop is possible.
inline MomentReport moment_report(const KUniformFamily& fam, double p, std::optional<double> r = {},
                                  std::optional<double> delta = {}, MomentPath path = MomentPath::Automatic) {
  if (path == MomentPath::PairLoop) return moment_report(fam.measure(), p, r, delta);
  numeric::require_probability(p, "p");
  MomentReport rep;
  rep.p = p;
  rep.r_from_user = r.has_value();
  rep.r = r ? *r : fam.max_spread_factor().first;
  rep.delta = delta ? TruncationParams(*delta).delta : TruncationParams::canonical(p, rep.r).delta;
  rep.max_set_size = fam.k();
  const IntersectionLaw law = fam.intersection_law();
  detail::finish_report(rep, law, law_moment(law, p, fam.k(), rep.delta));
  return rep;
}

/// All perfect matchings of K_n; K_n's edges are the universe elements,
/// indexed lexicographically over vertex pairs (i < j).
class MatchingFamily {
 public:
  explicit MatchingFamily(int n) : n_(n), family_(Universe(edge_count_checked(n))) {
    edges_.reserve(static_cast<std::size_t>(family_.universe().size()));
    edge_id_.assign(static_cast<std::size_t>(n * n), -1);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        edge_id_[static_cast<std::size_t>(i * n + j)] = static_cast<int>(edges_.size());
        edge_id_[static_cast<std::size_t>(j * n + i)] = static_cast<int>(edges_.size());
        edges_.emplace_back(i, j);
      }
    }
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    SubsetMask current(family_.universe());
    enumerate(used, current);
  }

  [[nodiscard]] int vertices() const { return n_; }
  [[nodiscard]] int k() const { return n_ / 2; }
  [[nodiscard]] const SetFamily& family() const { return family_; }
  [[nodiscard]] DiscreteMeasure uniform_measure() const { return DiscreteMeasure::uniform(family_); }
  [[nodiscard]] int edge_id(int i, int j) const { return edge_id_[static_cast<std::size_t>(i * n_ + j)]; }
  [[nodiscard]] std::pair<int, int> edge(int id) const { return edges_[static_cast<std::size_t>(id)]; }

 private:
  static int edge_count_checked(int n) {
    if (n < 2 || n % 2 != 0 || n > kMaxMatchingVertices) {
      throw ArgumentError("perfect matchings need an even n in [2, " + std::to_string(kMaxMatchingVertices) +
                          "], got " + std::to_string(n));
    }
    return n * (n - 1) / 2;
  }

  // Pairs the smallest unmatched vertex with each larger free vertex in turn.
  void enumerate(std::vector<bool>& used, SubsetMask& current) {
    int first = 0;
    while (first < n_ && used[static_cast<std::size_t>(first)]) ++first;
    if (first == n_) {
      family_.add(current);
      return;
    }
    used[static_cast<std::size_t>(first)] = true;
    for (int partner = first + 1; partner < n_; ++partner) {
      if (used[static_cast<std::size_t>(partner)]) continue;
      used[static_cast<std::size_t>(partner)] = true;
      current.insert(edge_id(first, partner));
      enumerate(used, current);
      current.erase(edge_id(first, partner));
      used[static_cast<std::size_t>(partner)] = false;
    }
    used[static_cast<std::size_t>(first)] = false;
  }

  int n_;
  SetFamily family_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> edge_id_;
};

inline MatchingFamily perfect_matchings(int n) { return MatchingFamily(n); }

struct MatchingOverlapStats {
  IntersectionLaw law;
  double mean = 0.0;
  double expected_mean = 0.0;  ///< (n/2)^2 / C(n,2) = n / (2(n-1))
  double p_share_one = 0.0;    ///< P(ℓ = 1)
  double p_share_any = 0.0;    ///< P(ℓ >= 1)
};

inline MatchingOverlapStats matching_overlap_stats(const MatchingFamily& mf,
                                                   std::uint64_t pair_budget = kDefaultPairBudget) {
  MatchingOverlapStats st;
  st.law = intersection_law_pair(mf.uniform_measure(), pair_budget);
  st.mean = st.law.mean();
  const double n = mf.vertices();
  st.expected_mean = n / (2.0 * (n - 1.0));
  st.p_share_one = st.law.at(1);
  st.p_share_any = 1.0 - st.law.at(0);
  return st;
}

struct CounterexampleReport {
  int n = 0;
  double p = 0.0;                 ///< ln(n) / n
  double r_star = 0.0;
  double r_star_over_n = 0.0;
  MatchingOverlapStats overlap;
  double ell_one_term = 0.0;      ///< P(ℓ = 1) / p
  double full_second_moment = 0.0;
  bool unrestricted_bound_violated = false;  ///< full second moment > 10/9
  bool ell_one_term_exceeds_threshold = false;
  double delta = 0.0;
  double truncated_value = 0.0;
  bool truncated_finite = false;
};

/// Default pair budget for the counterexample, large enough for n = 12 (10395^2 pairs).
inline constexpr std::uint64_t kCounterexamplePairBudget = 200'000'000;

inline CounterexampleReport counterexample_report(int n, std::uint64_t pair_budget = kCounterexamplePairBudget) {
  const MatchingFamily mf = perfect_matchings(n);
  const DiscreteMeasure m = mf.uniform_measure();
  CounterexampleReport rep;
  rep.n = n;
  rep.p = std::log(static_cast<double>(n)) / n;
  rep.r_star = max_spread_factor(m).max_spread_factor;
  rep.r_star_over_n = rep.r_star / n;
  rep.overlap = matching_overlap_stats(mf, pair_budget);
  rep.ell_one_term = rep.overlap.p_share_one / rep.p;
  const MomentValue full = law_moment(rep.overlap.law, rep.p);
  rep.full_second_moment = full.value;
  rep.unrestricted_bound_violated = full.divergent || full.value > kSecondMomentThreshold;
  rep.ell_one_term_exceeds_threshold = rep.ell_one_term > kSecondMomentThreshold;
  rep.delta = TruncationParams::canonical(rep.p, rep.r_star).delta;
  const MomentValue trunc = truncated_second_moment_value(m, rep.p, rep.delta, pair_budget);
  rep.truncated_value = trunc.value;
  rep.truncated_finite = !trunc.divergent && std::isfinite(trunc.value);
  return rep;
}

}  // namespace spreadlab

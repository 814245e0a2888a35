#pragma once

/**
 * @file moments.hpp
 * @brief Truncated and unrestricted second moments of the null likelihood ratio.
 *
 * With (A, A_0) independent copies from pi:
 *   full second moment      E_{Q_p}[Z^2] = Σ_ℓ P(|A_0 ∩ A| = ℓ) p^{-ℓ}
 *   truncated second moment E_A Σ_{ℓ > δ|A|} P(|A_0 ∩ A| = ℓ | A) p^{-ℓ}
 * Both are evaluated either by an M^2 pair loop over the support or from a
 * closed-form overlap law when every member has the same size and the
 * conditional overlap law does not depend on A.
 */

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "spreadlab/measure.hpp"
#include "spreadlab/numeric.hpp"
#include "spreadlab/planted.hpp"
#include "spreadlab/spread.hpp"

namespace spreadlab {

/// The classical second-moment target E Z^2 / (E Z)^2 <= 10/9.
inline constexpr double kSecondMomentThreshold = 10.0 / 9.0;

/// A sum of p^{-ℓ}-weighted terms. Terms that overflow a double are dropped
/// and flagged; value is then the partial sum of the finite terms.
struct MomentValue {
  double value = 0.0;
  bool divergent = false;
};

namespace detail {
class PowerSeriesSum {
 public:
  explicit PowerSeriesSum(double p) : log_p_(std::log(p)) {}
  void add(double prob, int ell) {
    if (prob <= 0.0) return;
    const double term = std::exp(std::log(prob) - ell * log_p_);
    if (!std::isfinite(term)) {
      divergent_ = true;
      return;
    }
    acc_ += term;
  }
  [[nodiscard]] MomentValue result() const { return {acc_.value(), divergent_}; }

 private:
  double log_p_;
  numeric::CompensatedSum acc_;
  bool divergent_ = false;
};
}  // namespace detail

/// Σ_{ℓ} law(ℓ) p^{-ℓ} restricted to ℓ > δ·set_size; pass delta < 0 for no restriction.
inline MomentValue law_moment(const IntersectionLaw& law, double p, int set_size = 0, double delta = -1.0) {
  numeric::require_probability(p, "p");
  detail::PowerSeriesSum sum(p);
  for (int ell = 0; ell <= law.max_overlap(); ++ell) {
    if (delta >= 0.0 && !exceeds_threshold(ell, set_size, delta)) continue;
    sum.add(law.at(ell), ell);
  }
  return sum.result();
}

inline MomentValue truncated_second_moment_value(const DiscreteMeasure& m, double p, double delta,
                                                 std::uint64_t pair_budget = kDefaultPairBudget) {
  numeric::require_probability(p, "p");
  if (!(delta >= 0.0)) throw ArgumentError("delta must be >= 0");
  const std::uint64_t count = m.size();
  if (count * count > pair_budget) {
    throw CapacityError("truncated second moment needs " + std::to_string(count * count) +
                        " pairs, budget is " + std::to_string(pair_budget));
  }
  detail::PowerSeriesSum sum(p);
  const auto& support = m.support();
  for (std::size_t i = 0; i < support.size(); ++i) {
    const int size_a = support[i].size();
    for (std::size_t j = 0; j < support.size(); ++j) {
      const int ell = support[i].overlap(support[j]);
      if (exceeds_threshold(ell, size_a, delta)) sum.add(m.weights()[i] * m.weights()[j], ell);
    }
  }
  return sum.result();
}

/// E_{A~pi} Σ_{ℓ > δ|A|} pi(|A_0 ∩ A| = ℓ | A) / p^ℓ by the pair loop.
inline double truncated_second_moment(const DiscreteMeasure& m, double p, double delta,
                                      std::uint64_t pair_budget = kDefaultPairBudget) {
  return truncated_second_moment_value(m, p, delta, pair_budget).value;
}

/// Closed-form path: every member has size set_size and overlap law given A is `law`.
inline double truncated_second_moment(const IntersectionLaw& law, int set_size, double p, double delta) {
  if (!(delta >= 0.0)) throw ArgumentError("delta must be >= 0");
  return law_moment(law, p, set_size, delta).value;
}

inline MomentValue full_second_moment_value(const DiscreteMeasure& m, double p,
                                            std::uint64_t pair_budget = kDefaultPairBudget) {
  return law_moment(intersection_law_pair(m, pair_budget), p);
}

/// Σ_ℓ pi⊗2(|A_0 ∩ A| = ℓ) / p^ℓ, equal to E_{Q_p}[Z^2].
inline double full_second_moment(const DiscreteMeasure& m, double p,
                                 std::uint64_t pair_budget = kDefaultPairBudget) {
  return full_second_moment_value(m, p, pair_budget).value;
}

/// Paley–Zygmund with E Z = 1: Q_p(Z > 0) >= 1 / E[Z^2].
inline double paley_zygmund_bound(double full_moment) {
  if (!(full_moment >= 1.0 - 1e-12)) {
    throw ArgumentError("second moment " + std::to_string(full_moment) + " < 1 contradicts E Z = 1");
  }
  return std::min(1.0, 1.0 / full_moment);
}

struct TailMajorant {
  double value = 0.0;
  double ratio = 0.0;  ///< e / (p R δ)
  bool divergent = false;
};

/// Σ_{δ·kA < ℓ <= kA, ℓ >= 1} (e/(pRδ))^ℓ, the geometric majorant for the
/// truncated sum of a set of size kA. Flags divergence when the ratio is >= 1.
inline TailMajorant binomial_tail_bound(int set_size, double r, double p, double delta) {
  if (set_size < 0) throw ArgumentError("set size must be >= 0");
  if (!(delta > 0.0)) throw ArgumentError("delta must be > 0");
  TailMajorant out;
  out.ratio = std::exp(1.0) / (p * r * delta);
  out.divergent = out.ratio >= 1.0;
  const int first = std::max(1, static_cast<int>(std::floor(delta * set_size)) + 1);
  if (first > set_size) return out;
  if (out.divergent) {
    numeric::CompensatedSum acc;
    for (int ell = first; ell <= set_size; ++ell) acc += std::pow(out.ratio, ell);
    out.value = acc.value();
  } else {
    const int count = set_size - first + 1;
    out.value = std::pow(out.ratio, first) * (1.0 - std::pow(out.ratio, count)) / (1.0 - out.ratio);
  }
  return out;
}

/// The four quantities of the planted-to-null reduction, computed exactly.
struct LemmaChainReport {
  double p = 0.0;
  double r = 0.0;
  double delta = 0.0;
  double tail_probability = 0.0;     ///< P(|A' ∩ A| > δ|A|), noise route
  double ratio_expectation = 0.0;    ///< E_P[Z_Y(A,δ) / Z_Y], observation route
  double truncated_planted = 0.0;    ///< E_P[Z_Y(A,δ)]
  double truncated_moment = 0.0;     ///< pair-loop truncated second moment
  double small_ratio_probability = 0.0;  ///< P_p(Z_Y <= √6 δ)
  bool tail_equals_ratio = false;
  bool planted_equals_moment = false;
  bool planting_step_holds = false;  ///< ratio <= ε + E Z_Y(A,δ)/ε with ε = √6 δ, and P(Z_Y <= ε) <= ε
  bool nonvacuous = false;           ///< 7δ < 1
  bool bounds_hold = true;           ///< when nonvacuous: truncated <= 6δ² and tail <= 6δ
};

inline constexpr double kLemmaChainTolerance = 1e-9;

inline LemmaChainReport lemma_chain_check(const DiscreteMeasure& m, double p, double r, double delta,
                                          std::uint64_t budget = kDefaultExactBudget) {
  TruncationParams t(delta);
  ExactPlanted exact(m, p, budget);
  const auto expectations = exact.coupling_expectations(t.delta);
  LemmaChainReport rep;
  rep.p = p;
  rep.r = r;
  rep.delta = t.delta;
  rep.tail_probability = expectations.tail;
  rep.ratio_expectation = exact.truncated_ratio_expectation(t.delta);
  rep.truncated_planted = expectations.truncated_z;
  rep.truncated_moment = truncated_second_moment(m, p, t.delta);
  const double eps = std::sqrt(6.0) * t.delta;
  rep.small_ratio_probability = exact.planted_small_ratio_probability(eps);
  rep.tail_equals_ratio = std::abs(rep.tail_probability - rep.ratio_expectation) <= kLemmaChainTolerance;
  rep.planted_equals_moment = std::abs(rep.truncated_planted - rep.truncated_moment) <=
                              kLemmaChainTolerance * std::max(1.0, std::abs(rep.truncated_moment));
  rep.planting_step_holds = rep.small_ratio_probability <= eps + 1e-12 &&
                            rep.ratio_expectation <= eps + rep.truncated_planted / eps + 1e-12;
  rep.nonvacuous = 7.0 * t.delta < 1.0;
  if (rep.nonvacuous) {
    rep.bounds_hold = rep.truncated_moment <= 6.0 * t.delta * t.delta + 1e-12 &&
                      rep.tail_probability <= 6.0 * t.delta + 1e-12;
  }
  return rep;
}

/// Lemma chain at the canonical δ = (pR*)^{-1/3}.
inline LemmaChainReport lemma_chain_check(const DiscreteMeasure& m, double p,
                                          std::uint64_t budget = kDefaultExactBudget) {
  const auto spread = max_spread_factor(m);
  if (spread.unbounded) throw ArgumentError("lemma chain needs a measure with a nonempty support member");
  const double r = spread.max_spread_factor;
  return lemma_chain_check(m, p, r, TruncationParams::canonical(p, r).delta, budget);
}

struct MomentReport {
  double p = 0.0;
  double r = 0.0;
  bool r_from_user = false;
  double delta = 0.0;
  int max_set_size = 0;
  std::string law_source;
  double truncated_value = 0.0;
  bool truncated_divergent = false;
  double truncated_bound = 0.0;  ///< 6δ²
  double full_second_moment = 0.0;
  bool full_divergent = false;
  double ell_one_term = 0.0;     ///< pi⊗2(ℓ = 1) / p
  double ell_zero_mass = 0.0;
  bool second_moment_threshold_holds = false;  ///< full <= 10/9
  double paley_zygmund_lower_bound = 0.0;
  bool nonvacuous = false;       ///< 7δ < 1
  bool truncated_bound_holds = true;
  TailMajorant majorant;
};

namespace detail {
inline void finish_report(MomentReport& rep, const IntersectionLaw& pair_law, MomentValue truncated) {
  const MomentValue full = law_moment(pair_law, rep.p);
  rep.law_source = to_string(pair_law.source);
  rep.truncated_value = truncated.value;
  rep.truncated_divergent = truncated.divergent;
  rep.truncated_bound = 6.0 * rep.delta * rep.delta;
  rep.full_second_moment = full.value;
  rep.full_divergent = full.divergent;
  rep.ell_zero_mass = pair_law.at(0);
  rep.ell_one_term = pair_law.at(1) / rep.p;
  rep.second_moment_threshold_holds = !full.divergent && full.value <= kSecondMomentThreshold;
  rep.paley_zygmund_lower_bound = full.divergent ? 0.0 : paley_zygmund_bound(full.value);
  rep.nonvacuous = 7.0 * rep.delta < 1.0;
  rep.truncated_bound_holds = !rep.nonvacuous || (!truncated.divergent && truncated.value <= rep.truncated_bound + 1e-12);
  rep.majorant = binomial_tail_bound(rep.max_set_size, rep.r, rep.p, rep.delta);
}
}  // namespace detail

/// Pair-loop moment report. R defaults to R*(m) and δ to (pR)^{-1/3}.
inline MomentReport moment_report(const DiscreteMeasure& m, double p, std::optional<double> r = {},
                                  std::optional<double> delta = {}, std::uint64_t pair_budget = kDefaultPairBudget) {
  numeric::require_probability(p, "p");
  MomentReport rep;
  rep.p = p;
  rep.r_from_user = r.has_value();
  if (r) {
    rep.r = *r;
  } else {
    const auto spread = max_spread_factor(m);
    if (spread.unbounded) throw ArgumentError("R* is unbounded for a measure supported on the empty set; pass R");
    rep.r = spread.max_spread_factor;
  }
  rep.delta = delta ? TruncationParams(*delta).delta : TruncationParams::canonical(p, rep.r).delta;
  rep.max_set_size = m.max_size();
  detail::finish_report(rep, intersection_law_pair(m, pair_budget),
                        truncated_second_moment_value(m, p, rep.delta, pair_budget));
  return rep;
}

}  // namespace spreadlab

#pragma once

/**
 * @file measure.hpp
 * @brief Finite-support probability measures over subsets of a universe.
 *
 * A DiscreteMeasure pairs a SetFamily (its support) with weights that are
 * renormalized on construction. Zero-weight members are dropped, so
 * family().members() is exactly the support. The empty set is a legal member.
 */

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spreadlab/numeric.hpp"
#include "spreadlab/random.hpp"
#include "spreadlab/setcore.hpp"

namespace spreadlab {

/// Default cap on M^2 for pair loops.
inline constexpr std::uint64_t kDefaultPairBudget = 100'000'000;

class DiscreteMeasure {
 public:
  /// weights[i] belongs to family[i]. Negative or non-finite weights are rejected.
  DiscreteMeasure(const SetFamily& family, const std::vector<double>& weights)
      : family_(family.universe()) {
    if (weights.size() != family.size()) {
      throw ArgumentError("weight count " + std::to_string(weights.size()) +
                          " does not match member count " + std::to_string(family.size()));
    }
    std::vector<std::pair<SubsetMask, double>> items;
    items.reserve(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) items.emplace_back(family[i], weights[i]);
    build(items);
  }

  /// Duplicate subsets have their weights merged.
  DiscreteMeasure(Universe u, const std::vector<std::pair<SubsetMask, double>>& items) : family_(u) {
    build(items);
  }

  static DiscreteMeasure uniform(const SetFamily& family) {
    return DiscreteMeasure(family, std::vector<double>(family.size(), 1.0));
  }
  static DiscreteMeasure point_mass(const SubsetMask& a) {
    return DiscreteMeasure(a.universe(), {{a, 1.0}});
  }

  [[nodiscard]] Universe universe() const { return family_.universe(); }
  [[nodiscard]] const SetFamily& family() const { return family_; }
  [[nodiscard]] const std::vector<SubsetMask>& support() const { return family_.members(); }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] std::size_t size() const { return weights_.size(); }
  [[nodiscard]] int max_size() const { return family_.max_size(); }
  [[nodiscard]] double weight_of(const SubsetMask& a) const {
    auto i = family_.find(a);
    return i ? weights_[*i] : 0.0;
  }

  [[nodiscard]] std::size_t sample_index(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

 private:
  void build(const std::vector<std::pair<SubsetMask, double>>& items) {
    std::vector<double> merged;
    for (const auto& [mask, w] : items) {
      if (!std::isfinite(w) || w < 0.0) {
        throw ArgumentError("weight of " + mask.to_string() + " must be finite and nonnegative");
      }
      if (w == 0.0) continue;
      const std::size_t before = family_.size();
      const std::size_t idx = family_.add(mask);
      if (idx == before) {
        merged.push_back(w);
      } else {
        merged[idx] += w;
      }
    }
    numeric::CompensatedSum total;
    for (double w : merged) total += w;
    if (merged.empty() || !(total.value() > 0.0)) {
      throw ArgumentError("measure has no positive weight");
    }
    weights_.reserve(merged.size());
    cumulative_.reserve(merged.size());
    numeric::CompensatedSum run;
    for (double w : merged) {
      weights_.push_back(w / total.value());
      run += weights_.back();
      cumulative_.push_back(run.value());
    }
    cumulative_.back() = 1.0;
  }

  SetFamily family_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

inline SubsetMask sample(const DiscreteMeasure& m, Rng& rng) { return m.support()[m.sample_index(rng)]; }

/// pi(s ⊆ A), summed exactly over the support.
inline double containment_prob(const DiscreteMeasure& m, const SubsetMask& s) {
  if (s.universe_size() != m.universe().size()) throw ArgumentError("universe mismatch in containment_prob");
  numeric::CompensatedSum acc;
  const auto& support = m.support();
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (s.within(support[i])) acc += m.weights()[i];
  }
  return acc.value();
}

/// Law of an overlap size ℓ = 0..k.
struct IntersectionLaw {
  enum class Source { PairEnumeration, Conditional, ClosedForm };

  std::vector<double> probs;
  Source source = Source::PairEnumeration;

  [[nodiscard]] double at(int ell) const {
    return ell >= 0 && static_cast<std::size_t>(ell) < probs.size() ? probs[static_cast<std::size_t>(ell)] : 0.0;
  }
  [[nodiscard]] int max_overlap() const { return static_cast<int>(probs.size()) - 1; }
  [[nodiscard]] double total() const {
    numeric::CompensatedSum acc;
    for (double p : probs) acc += p;
    return acc.value();
  }
  [[nodiscard]] double mean() const {
    numeric::CompensatedSum acc;
    for (std::size_t l = 0; l < probs.size(); ++l) acc += static_cast<double>(l) * probs[l];
    return acc.value();
  }
};

inline const char* to_string(IntersectionLaw::Source s) {
  switch (s) {
    case IntersectionLaw::Source::PairEnumeration: return "pair-enumeration";
    case IntersectionLaw::Source::Conditional: return "conditional";
    case IntersectionLaw::Source::ClosedForm: return "closed-form";
  }
  return "unknown";
}

/// Law of |A_0 ∩ A| for independent A_0, A ~ m, by a weighted double loop.
inline IntersectionLaw intersection_law_pair(const DiscreteMeasure& m,
                                             std::uint64_t pair_budget = kDefaultPairBudget) {
  const std::uint64_t count = m.size();
  if (count * count > pair_budget) {
    throw CapacityError("pair enumeration needs " + std::to_string(count * count) +
                        " pairs, budget is " + std::to_string(pair_budget));
  }
  const auto& support = m.support();
  const auto& w = m.weights();
  std::vector<numeric::CompensatedSum> acc(static_cast<std::size_t>(m.max_size()) + 1);
  for (std::size_t i = 0; i < support.size(); ++i) {
    std::vector<double> row(acc.size(), 0.0);
    for (std::size_t j = 0; j < support.size(); ++j) {
      row[static_cast<std::size_t>(support[i].overlap(support[j]))] += w[j];
    }
    for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += w[i] * row[l];
  }
  IntersectionLaw law;
  law.source = IntersectionLaw::Source::PairEnumeration;
  for (const auto& a : acc) law.probs.push_back(a.value());
  return law;
}

/// Law of |A_0 ∩ a| for A_0 ~ m.
inline IntersectionLaw intersection_law_given(const DiscreteMeasure& m, const SubsetMask& a) {
  if (a.universe_size() != m.universe().size()) throw ArgumentError("universe mismatch in intersection_law_given");
  std::vector<numeric::CompensatedSum> acc(static_cast<std::size_t>(m.max_size()) + 1);
  const auto& support = m.support();
  for (std::size_t j = 0; j < support.size(); ++j) {
    acc[static_cast<std::size_t>(a.overlap(support[j]))] += m.weights()[j];
  }
  IntersectionLaw law;
  law.source = IntersectionLaw::Source::Conditional;
  for (const auto& x : acc) law.probs.push_back(x.value());
  return law;
}

/// Overlap law of two independent uniform k-subsets of an N-set:
/// P(ℓ) = C(k,ℓ) C(N-k,k-ℓ) / C(N,k).
inline IntersectionLaw hypergeometric_intersection_law(std::int64_t universe_size, std::int64_t k) {
  if (k < 0 || universe_size < 0 || k > universe_size) {
    throw ArgumentError("hypergeometric law needs 0 <= k <= N, got N=" + std::to_string(universe_size) +
                        " k=" + std::to_string(k));
  }
  IntersectionLaw law;
  law.source = IntersectionLaw::Source::ClosedForm;
  const double log_total = numeric::log_binomial(universe_size, k);
  for (std::int64_t l = 0; l <= k; ++l) {
    const double lp = numeric::log_binomial(k, l) + numeric::log_binomial(universe_size - k, k - l) - log_total;
    law.probs.push_back(std::exp(lp));
  }
  return law;
}

}  // namespace spreadlab

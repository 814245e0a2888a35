#pragma once

/**
 * @file planted.hpp
 * @brief The planted model: signal A ~ pi, noise V ~ Q_p, observation Y = A ∪ V,
 *        and the posterior resample A' of A given Y.
 *
 * The posterior weight of a candidate A' is pi(A') 1{A' ⊆ Y} p^{-|A'|} / Z_Y,
 * where Z_Y is also the likelihood ratio between the planted and the null law
 * of Y. All p^{-|A|} factors are handled in log space.
 *
 * ExactPlanted evaluates expectations under the coupling by enumerating every
 * noise set V (or every observation Y) of a universe with N <= 20 elements.
 * Two independent enumeration orders are offered:
 *   - the noise route sums over (A, V) with weight pi(A) Q_p(V);
 *   - the observation route sums over (Y, A) with weight pi(A) Q_p(Y) p^{-|A|} 1{A ⊆ Y}.
 */

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "spreadlab/measure.hpp"
#include "spreadlab/numeric.hpp"
#include "spreadlab/random.hpp"
#include "spreadlab/setcore.hpp"

namespace spreadlab {

/// The observation is inconsistent with every support member (Z_Y = 0).
class NoConsistentSignal : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr int kMaxExactUniverse = 20;
/// Default cap on M^2 2^N for exact planted enumeration.
inline constexpr std::uint64_t kDefaultExactBudget = 2'000'000'000;

class BiasedSampler {
 public:
  BiasedSampler(Universe u, double p) : universe_(u), p_(p) { numeric::require_probability(p, "p"); }
  [[nodiscard]] Universe universe() const { return universe_; }
  [[nodiscard]] double p() const { return p_; }

 private:
  Universe universe_;
  double p_;
};

/// Each element present independently with probability p; p = 0 is accepted here.
inline SubsetMask sample_biased(Universe u, double p, Rng& rng) {
  numeric::require_probability(p, "p", /*allow_zero=*/true);
  SubsetMask v(u);
  for (int e = 0; e < u.size(); ++e) {
    if (rng.bernoulli(p)) v.insert(e);
  }
  return v;
}

inline SubsetMask sample_biased(const BiasedSampler& b, Rng& rng) { return sample_biased(b.universe(), b.p(), rng); }

/// Overlap threshold δ; the event of interest is |A' ∩ A| > δ|A| (strict).
struct TruncationParams {
  double delta;

  explicit TruncationParams(double d) : delta(d) {
    if (!(d > 0.0) || !std::isfinite(d)) throw ArgumentError("delta must be finite and > 0");
  }
  /// δ = (pR)^{-1/3}.
  static TruncationParams canonical(double p, double r) { return TruncationParams(std::cbrt(1.0 / (p * r))); }
};

inline bool exceeds_threshold(int overlap, int set_size, double delta) {
  return static_cast<double>(overlap) > delta * static_cast<double>(set_size);
}

/// log Z_Y; -inf when no support member fits inside Y.
inline double log_z_y(const DiscreteMeasure& m, double p, const SubsetMask& y) {
  numeric::require_probability(p, "p");
  if (y.universe_size() != m.universe().size()) throw ArgumentError("universe mismatch in z_y");
  const double log_p = std::log(p);
  std::vector<double> terms;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& a = m.support()[i];
    if (a.within(y)) terms.push_back(std::log(m.weights()[i]) - a.size() * log_p);
  }
  return numeric::log_sum_exp(terms);
}

/// Z_Y = Σ_{A'} pi(A') 1{A' ⊆ Y} / p^{|A'|}.
inline double z_y(const DiscreteMeasure& m, double p, const SubsetMask& y) { return std::exp(log_z_y(m, p, y)); }

inline DiscreteMeasure posterior(const DiscreteMeasure& m, double p, const SubsetMask& y) {
  const double log_z = log_z_y(m, p, y);
  if (log_z == numeric::kNegInf) throw NoConsistentSignal("Z_Y = 0 for Y = " + y.to_string());
  const double log_p = std::log(p);
  std::vector<std::pair<SubsetMask, double>> items;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& a = m.support()[i];
    if (a.within(y)) items.emplace_back(a, std::exp(std::log(m.weights()[i]) - a.size() * log_p - log_z));
  }
  return DiscreteMeasure(m.universe(), items);
}

struct PlantedDraw {
  SubsetMask signal;      // A
  SubsetMask noise;       // V
  SubsetMask observed;    // Y = A ∪ V
  SubsetMask resampled;   // A'
  double z_y;
};

/// One draw from the coupling. Random stream order: A, then V, then A'.
inline PlantedDraw sample_coupling(const DiscreteMeasure& m, double p, Rng& rng) {
  numeric::require_probability(p, "p");
  SubsetMask a = sample(m, rng);
  SubsetMask v = sample_biased(m.universe(), p, rng);
  SubsetMask y = a.or_with(v);
  const DiscreteMeasure post = posterior(m, p, y);
  SubsetMask a_prime = sample(post, rng);
  return {a, v, y, a_prime, z_y(m, p, y)};
}

/// Expectations under the coupling, all from one noise-route pass.
struct CouplingExpectations {
  double delta = 0.0;
  double shrinkage = 0.0;       ///< E[|A' \ V| / |A| 1{A ≠ ∅}]
  double overlap_ratio = 0.0;   ///< E[|A' ∩ A| / |A| 1{A ≠ ∅}]
  double tail = 0.0;            ///< P(|A' ∩ A| > δ|A|)
  double truncated_z = 0.0;     ///< E[Z_Y(A, δ)]
};

/// Exact enumeration over the planted model for small universes.
class ExactPlanted {
 public:
  ExactPlanted(const DiscreteMeasure& m, double p, std::uint64_t budget = kDefaultExactBudget)
      : n_(m.universe().size()), p_(p), log_p_(std::log(p)) {
    numeric::require_probability(p, "p");
    if (n_ > kMaxExactUniverse) {
      throw CapacityError("exact planted enumeration supports N <= " + std::to_string(kMaxExactUniverse) +
                          ", got " + std::to_string(n_));
    }
    const std::uint64_t count = m.size();
    const std::uint64_t work = count * count * (std::uint64_t{1} << n_);
    if (work > budget) {
      throw CapacityError("exact planted enumeration needs " + std::to_string(work) + " steps, budget is " +
                          std::to_string(budget));
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      members_.push_back(m.support()[i].low_word());
      sizes_.push_back(m.support()[i].size());
      weights_.push_back(m.weights()[i]);
      log_terms_.push_back(std::log(m.weights()[i]) - sizes_.back() * log_p_);
    }
    q_table_ = numeric::biased_weight_table(n_, p);
  }

  [[nodiscard]] int universe_size() const { return n_; }
  [[nodiscard]] std::uint64_t observation_count() const { return std::uint64_t{1} << n_; }
  [[nodiscard]] double q_weight(std::uint64_t y) const { return q_table_[static_cast<std::size_t>(std::popcount(y))]; }

  [[nodiscard]] double log_z(std::uint64_t y) const {
    std::vector<double> terms;
    for (std::size_t j = 0; j < members_.size(); ++j) {
      if ((members_[j] & ~y) == 0) terms.push_back(log_terms_[j]);
    }
    return numeric::log_sum_exp(terms);
  }

  /// Noise route: Σ_A Σ_V pi(A) Q(V) over the posterior at Y = A ∪ V.
  [[nodiscard]] CouplingExpectations coupling_expectations(double delta) const {
    numeric::CompensatedSum shrink, overlap, tail, trunc;
    std::vector<double> post(members_.size());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      const std::uint64_t a = members_[i];
      const int size_a = sizes_[i];
      for (std::uint64_t v = 0; v < observation_count(); ++v) {
        const double weight = weights_[i] * q_weight(v);
        if (weight == 0.0) continue;
        const std::uint64_t y = a | v;
        posterior_into(y, post);
        double s_shrink = 0.0, s_overlap = 0.0, s_tail = 0.0, s_trunc = 0.0;
        for (std::size_t j = 0; j < members_.size(); ++j) {
          if ((members_[j] & ~y) != 0) continue;
          const int ov = std::popcount(members_[j] & a);
          if (size_a > 0) {
            s_shrink += post[j] * std::popcount(members_[j] & ~v) / size_a;
            s_overlap += post[j] * ov / size_a;
          }
          if (exceeds_threshold(ov, size_a, delta)) {
            s_tail += post[j];
            s_trunc += std::exp(log_terms_[j]);
          }
        }
        shrink += weight * s_shrink;
        overlap += weight * s_overlap;
        tail += weight * s_tail;
        trunc += weight * s_trunc;
      }
    }
    return {delta, shrink.value(), overlap.value(), tail.value(), trunc.value()};
  }

  /// Observation route: E_P[Z_Y(A, δ) / Z_Y] with Y enumerated directly.
  [[nodiscard]] double truncated_ratio_expectation(double delta) const {
    numeric::CompensatedSum acc;
    for (std::uint64_t y = 0; y < observation_count(); ++y) {
      const double qy = q_weight(y);
      if (qy == 0.0) continue;
      const double lz = log_z(y);
      if (lz == numeric::kNegInf) continue;
      for (std::size_t i = 0; i < members_.size(); ++i) {
        if ((members_[i] & ~y) != 0) continue;
        // P(A = A_i, Y = y) = pi(A_i) Q(y) p^{-|A_i|}
        const double joint = qy * std::exp(log_terms_[i]);
        std::vector<double> restricted;
        for (std::size_t j = 0; j < members_.size(); ++j) {
          if ((members_[j] & ~y) != 0) continue;
          if (exceeds_threshold(std::popcount(members_[j] & members_[i]), sizes_[i], delta)) {
            restricted.push_back(log_terms_[j]);
          }
        }
        const double lzd = numeric::log_sum_exp(restricted);
        if (lzd != numeric::kNegInf) acc += joint * std::exp(lzd - lz);
      }
    }
    return acc.value();
  }

  /// Planted law of Y, by the noise route: bucket pi(A) Q(V) at A ∪ V.
  [[nodiscard]] std::vector<double> planted_observation_law() const {
    std::vector<numeric::CompensatedSum> acc(observation_count());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      for (std::uint64_t v = 0; v < observation_count(); ++v) {
        const double weight = weights_[i] * q_weight(v);
        if (weight != 0.0) acc[members_[i] | v] += weight;
      }
    }
    std::vector<double> out;
    out.reserve(acc.size());
    for (const auto& a : acc) out.push_back(a.value());
    return out;
  }

  /// Z_Y for every Y (0 where no member fits).
  [[nodiscard]] std::vector<double> z_values() const {
    std::vector<double> out(observation_count());
    for (std::uint64_t y = 0; y < observation_count(); ++y) out[y] = std::exp(log_z(y));
    return out;
  }

  /// E_{Q_p}[Z] and E_{Q_p}[Z^2] over the null law.
  [[nodiscard]] std::pair<double, double> null_moments() const {
    numeric::CompensatedSum first, second;
    for (std::uint64_t y = 0; y < observation_count(); ++y) {
      const double qy = q_weight(y);
      if (qy == 0.0) continue;
      const double z = std::exp(log_z(y));
      first += qy * z;
      second += qy * z * z;
    }
    return {first.value(), second.value()};
  }

  /// Q_p(Z > 0): probability that V contains a support member.
  [[nodiscard]] double null_cover_probability() const {
    numeric::CompensatedSum acc;
    for (std::uint64_t y = 0; y < observation_count(); ++y) {
      for (std::uint64_t a : members_) {
        if ((a & ~y) == 0) {
          acc += q_weight(y);
          break;
        }
      }
    }
    return acc.value();
  }

  /// P_p(Z_Y <= eps).
  [[nodiscard]] double planted_small_ratio_probability(double eps) const {
    const auto law = planted_observation_law();
    numeric::CompensatedSum acc;
    for (std::uint64_t y = 0; y < observation_count(); ++y) {
      if (law[y] != 0.0 && std::exp(log_z(y)) <= eps) acc += law[y];
    }
    return acc.value();
  }

  /// Joint law of (|A|, |A'|, |A ∩ A'|) under the coupling.
  [[nodiscard]] std::map<std::tuple<int, int, int>, double> overlap_joint_law() const {
    std::map<std::tuple<int, int, int>, numeric::CompensatedSum> acc;
    std::vector<double> post(members_.size());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      for (std::uint64_t v = 0; v < observation_count(); ++v) {
        const double weight = weights_[i] * q_weight(v);
        if (weight == 0.0) continue;
        posterior_into(members_[i] | v, post);
        for (std::size_t j = 0; j < members_.size(); ++j) {
          if (post[j] == 0.0) continue;
          acc[{sizes_[i], sizes_[j], std::popcount(members_[i] & members_[j])}] += weight * post[j];
        }
      }
    }
    std::map<std::tuple<int, int, int>, double> out;
    for (const auto& [key, sum] : acc) out[key] = sum.value();
    return out;
  }

 private:
  void posterior_into(std::uint64_t y, std::vector<double>& post) const {
    const double lz = log_z(y);
    for (std::size_t j = 0; j < members_.size(); ++j) {
      post[j] = (members_[j] & ~y) == 0 ? std::exp(log_terms_[j] - lz) : 0.0;
    }
  }

  int n_;
  double p_;
  double log_p_;
  std::vector<std::uint64_t> members_;
  std::vector<int> sizes_;
  std::vector<double> weights_;
  std::vector<double> log_terms_;
  std::vector<double> q_table_;
};

/// Exact E[|A' \ V| / |A| 1{A ≠ ∅}] under the coupling.
inline double shrinkage_expectation_exact(const DiscreteMeasure& m, double p,
                                          std::uint64_t budget = kDefaultExactBudget) {
  return ExactPlanted(m, p, budget).coupling_expectations(1.0).shrinkage;
}

/// Exact P(|A' ∩ A| > δ|A|) under the coupling.
inline double overlap_tail_exact(const DiscreteMeasure& m, double p, TruncationParams t,
                                   std::uint64_t budget = kDefaultExactBudget) {
  return ExactPlanted(m, p, budget).coupling_expectations(t.delta).tail;
}

/// The shrinkage bound 7/(pR)^{1/3}.
inline double shrinkage_bound(double p, double r) { return 7.0 / std::cbrt(p * r); }

}  // namespace spreadlab

#pragma once

/**
 * @file coupling.hpp
 * @brief Iterated planted coupling: rounds of noise V_i ~ Q_q, posterior
 *        resample B_i, and shrinkage A_{i+1} = B_i \ V_i.
 *
 * The conditional law pi_i of A_i given V_1..V_{i-1} is carried exactly:
 *   pi_{i+1}(T) = Σ_A pi_i(A) Σ_B post_i(B | A ∪ V_i) 1{B \ V_i = T},
 * so its support never exceeds that of pi_1 and every round can be checked
 * for spread exactly.
 */

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spreadlab/measure.hpp"
#include "spreadlab/numeric.hpp"
#include "spreadlab/planted.hpp"
#include "spreadlab/random.hpp"
#include "spreadlab/setcore.hpp"
#include "spreadlab/spread.hpp"
#include "spreadlab/stats.hpp"

namespace spreadlab {

struct CouplingConfig {
  double q = 0.5;
  int rounds = 1;
  std::uint64_t seed = 0;

  void validate() const {
    numeric::require_probability(q, "q");
    if (rounds < 1) throw ArgumentError("round count must be >= 1");
  }
};

/// The per-round rate 700^3 / R used by the asymptotic argument.
struct AsymptoticDefaultQ {
  double value;
  bool feasible;  ///< value < 1
};

inline AsymptoticDefaultQ asymptotic_default_q(double r) {
  const double v = 700.0 * 700.0 * 700.0 / r;
  return {v, v < 1.0};
}

/// ceil(ln k), at least 1.
inline int default_round_count(int k) {
  if (k < 1) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(static_cast<double>(k)) - 1e-12)));
}

/// Law of the union of m independent Q_q sets: 1 - (1-q)^m.
inline double effective_p(double q, int rounds) {
  numeric::require_probability(q, "q");
  if (rounds < 1) throw ArgumentError("round count must be >= 1");
  return 1.0 - std::pow(1.0 - q, rounds);
}

struct RoundRecord {
  SubsetMask noise;   // V_i
  SubsetMask signal;  // A_i
  SubsetMask resample;  // B_i
};

struct CouplingTrace {
  std::vector<RoundRecord> rounds;
  SubsetMask final_set;                 ///< A_{m+1}
  SubsetMask noise_union;               ///< ∪ V_i
  std::optional<SubsetMask> cover_witness;
  std::vector<DiscreteMeasure> laws;    ///< pi_1 .. pi_{m+1}
};

/// First support member of m0 contained in union_v, in family order.
inline std::optional<SubsetMask> cover_from_union(const DiscreteMeasure& m0, const SubsetMask& union_v) {
  if (union_v.universe_size() != m0.universe().size()) throw ArgumentError("universe mismatch in cover_from_union");
  for (const auto& t : m0.support()) {
    if (t.within(union_v)) return t;
  }
  return std::nullopt;
}

namespace detail {
// Posterior weights of law given y, aligned with law.support(); zero outside y.
inline std::vector<double> posterior_weights(const DiscreteMeasure& law, double log_q, const SubsetMask& y) {
  const auto& support = law.support();
  std::vector<double> logs(support.size(), numeric::kNegInf);
  std::vector<double> present;
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (support[j].within(y)) {
      logs[j] = std::log(law.weights()[j]) - support[j].size() * log_q;
      present.push_back(logs[j]);
    }
  }
  const double lz = numeric::log_sum_exp(present);
  std::vector<double> w(support.size(), 0.0);
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (logs[j] != numeric::kNegInf) w[j] = std::exp(logs[j] - lz);
  }
  return w;
}

inline std::size_t draw_index(const std::vector<double>& weights, Rng& rng) {
  const double u = rng.uniform();
  numeric::CompensatedSum run;
  std::size_t last = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] == 0.0) continue;
    last = j;
    run += weights[j];
    if (u < run.value()) return j;
  }
  return last;
}
}  // namespace detail

/// Runs the iterated coupling. Random stream order: A_1, then per round V_i
/// followed by the posterior draw of B_i.
inline CouplingTrace run_rounds(const DiscreteMeasure& m0, const CouplingConfig& cfg, Rng& rng) {
  cfg.validate();
  const Universe u = m0.universe();
  const double log_q = std::log(cfg.q);
  CouplingTrace trace{{}, SubsetMask(u), SubsetMask(u), std::nullopt, {m0}};
  SubsetMask current = sample(m0, rng);
  for (int round = 0; round < cfg.rounds; ++round) {
    const DiscreteMeasure& law = trace.laws.back();
    SubsetMask v = sample_biased(u, cfg.q, rng);
    const auto post = detail::posterior_weights(law, log_q, current.or_with(v));
    const SubsetMask b = law.support()[detail::draw_index(post, rng)];

    std::vector<std::pair<SubsetMask, double>> next;
    for (std::size_t i = 0; i < law.size(); ++i) {
      const auto w = detail::posterior_weights(law, log_q, law.support()[i].or_with(v));
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[j] > 0.0) next.emplace_back(law.support()[j].and_not(v), law.weights()[i] * w[j]);
      }
    }
    trace.rounds.push_back({v, current, b});
    trace.noise_union = trace.noise_union.or_with(v);
    current = b.and_not(v);
    trace.laws.emplace_back(u, next);
  }
  trace.final_set = current;
  if (current.empty()) trace.cover_witness = cover_from_union(m0, trace.noise_union);
  return trace;
}

/// check_spread at R for each maintained law pi_1 .. pi_{m+1}.
inline std::vector<bool> conditional_law_spread_check(const CouplingTrace& trace, double r) {
  std::vector<bool> out;
  out.reserve(trace.laws.size());
  for (const auto& law : trace.laws) out.push_back(check_spread(law, r).passed);
  return out;
}

/// Structural invariants of one trace; returns a description of the first
/// violation, or nothing.
inline std::optional<std::string> trace_violation(const DiscreteMeasure& m0, const CouplingTrace& trace) {
  SubsetMask union_v(m0.universe());
  for (std::size_t i = 0; i < trace.rounds.size(); ++i) {
    const auto& r = trace.rounds[i];
    const SubsetMask next = i + 1 < trace.rounds.size() ? trace.rounds[i + 1].signal : trace.final_set;
    if (next != r.resample.and_not(r.noise)) return "A_{i+1} != B_i \\ V_i at round " + std::to_string(i + 1);
    if (!r.resample.within(r.signal.or_with(r.noise))) return "B_i not inside A_i ∪ V_i at round " + std::to_string(i + 1);
    const DiscreteMeasure& law_i = i < trace.laws.size() ? trace.laws[i] : m0;
    if (!law_i.family().find(r.resample)) return "B_i outside supp pi_i at round " + std::to_string(i + 1);
    union_v = union_v.or_with(r.noise);
  }
  if (union_v != trace.noise_union) return std::string("noise union mismatch");
  if (trace.final_set.empty()) {
    if (!trace.cover_witness) return std::string("empty final set without cover witness");
    if (!trace.cover_witness->within(union_v)) return std::string("cover witness not inside ∪V_i");
    if (!m0.family().find(*trace.cover_witness)) return std::string("cover witness outside supp pi");
  }
  return std::nullopt;
}

struct ShrinkageReport {
  std::uint64_t traces = 0;
  int rounds = 0;
  int k = 0;
  double q = 0.0;
  double r = 0.0;
  double mean_root = 0.0;        ///< estimate of E|A_{m+1}|^{1/m}
  double mean_root_se = 0.0;
  double bound = 0.0;            ///< 7 k^{1/m} / (qR)^{1/3}
  double bound_quarter = 0.0;    ///< same with exponent 1/4
  bool nonvacuous = false;       ///< 7 / (qR)^{1/3} < 1
  bool within_bound = false;
  ProportionEstimate nonempty;   ///< P(A_{m+1} ≠ ∅)
  std::vector<double> round_ratio;     ///< E[|A_{i+1}|/|A_i| 1{A_i ≠ ∅}]
  std::vector<double> round_ratio_se;
  double holder_composite = 0.0; ///< (k Π round_ratio)^{1/m}
};

inline constexpr std::uint64_t kMinShrinkageTraces = 1000;

inline ShrinkageReport shrinkage_diagnostic(const std::vector<CouplingTrace>& traces, int k, double q, double r) {
  if (traces.size() < kMinShrinkageTraces) {
    throw ArgumentError("shrinkage diagnostic needs at least " + std::to_string(kMinShrinkageTraces) + " traces");
  }
  ShrinkageReport rep;
  rep.traces = traces.size();
  rep.rounds = static_cast<int>(traces.front().rounds.size());
  rep.k = k;
  rep.q = q;
  rep.r = r;
  const double inv_m = 1.0 / rep.rounds;
  MeanAccumulator root;
  std::vector<MeanAccumulator> ratios(static_cast<std::size_t>(rep.rounds));
  std::uint64_t nonempty = 0;
  for (const auto& t : traces) {
    if (static_cast<int>(t.rounds.size()) != rep.rounds) throw ArgumentError("traces have differing round counts");
    const int final_size = t.final_set.size();
    root.add(final_size == 0 ? 0.0 : std::pow(static_cast<double>(final_size), inv_m));
    if (final_size > 0) ++nonempty;
    for (int i = 0; i < rep.rounds; ++i) {
      const int cur = t.rounds[static_cast<std::size_t>(i)].signal.size();
      const int nxt = i + 1 < rep.rounds ? t.rounds[static_cast<std::size_t>(i + 1)].signal.size() : final_size;
      ratios[static_cast<std::size_t>(i)].add(cur == 0 ? 0.0 : static_cast<double>(nxt) / cur);
    }
  }
  rep.mean_root = root.mean();
  rep.mean_root_se = root.standard_error();
  const double k_root = std::pow(static_cast<double>(k), inv_m);
  rep.bound = 7.0 * k_root / std::cbrt(q * r);
  rep.bound_quarter = 7.0 * k_root / std::pow(q * r, 0.25);
  rep.nonvacuous = 7.0 / std::cbrt(q * r) < 1.0;
  rep.within_bound = rep.mean_root <= rep.bound;
  rep.nonempty = wilson_interval(nonempty, traces.size());
  double product = k;
  for (const auto& acc : ratios) {
    rep.round_ratio.push_back(acc.mean());
    rep.round_ratio_se.push_back(acc.standard_error());
    product *= acc.mean();
  }
  rep.holder_composite = std::pow(product, inv_m);
  return rep;
}

}  // namespace spreadlab

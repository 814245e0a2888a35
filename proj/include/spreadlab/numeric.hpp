#pragma once

// Small numeric helpers shared by the exact-enumeration engines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spreadlab {

/// Malformed input or a violated precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An exact computation would exceed its configured enumeration budget.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

namespace numeric {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Neumaier-compensated accumulator. Addition order is the caller's, so a
/// fixed loop order gives bit-reproducible totals.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// log(sum(exp(terms))) with max-shift; returns -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> terms) {
  double hi = kNegInf;
  for (double t : terms) hi = std::max(hi, t);
  if (hi == kNegInf) return kNegInf;
  CompensatedSum acc;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc.value());
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

/// log C(n, r) via log-gamma; -inf outside 0 <= r <= n.
inline double log_binomial(std::int64_t n, std::int64_t r) {
  if (r < 0 || r > n || n < 0) return kNegInf;
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(r) + 1.0) -
         std::lgamma(static_cast<double>(n - r) + 1.0);
}

/// p^k (1-p)^(n-k) tabulated for k = 0..n; handles p = 0 and p = 1 exactly.
inline std::vector<double> biased_weight_table(int n, double p) {
  std::vector<double> table(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    table[static_cast<std::size_t>(k)] = std::pow(p, k) * std::pow(1.0 - p, n - k);
  }
  return table;
}

inline void require_probability(double p, const char* what, bool allow_zero = false) {
  const bool ok = allow_zero ? (p >= 0.0 && p <= 1.0) : (p > 0.0 && p <= 1.0);
  if (!ok || std::isnan(p)) {
    throw ArgumentError(std::string(what) + " must lie in " + (allow_zero ? "[0,1]" : "(0,1]") +
                        ", got " + std::to_string(p));
  }
}

}  // namespace numeric
}  // namespace spreadlab

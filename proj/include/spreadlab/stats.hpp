#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "spreadlab/numeric.hpp"

namespace spreadlab {

/// Two-sided 95% normal quantile.
inline constexpr double kZ95 = 1.959963984540054;

struct ProportionEstimate {
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 1.0;

  [[nodiscard]] bool contains(double x) const { return lower <= x && x <= upper; }
};

/// Wilson score interval for a binomial proportion.
inline ProportionEstimate wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = kZ95) {
  if (trials == 0) throw ArgumentError("Wilson interval needs at least one trial");
  if (successes > trials) throw ArgumentError("successes exceed trials");
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (phat + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  ProportionEstimate out;
  out.successes = successes;
  out.trials = trials;
  out.estimate = phat;
  out.lower = std::max(0.0, centre - half);
  out.upper = std::min(1.0, centre + half);
  // Rounding can push a bound past phat at the extremes.
  out.lower = std::min(out.lower, phat);
  out.upper = std::max(out.upper, phat);
  return out;
}

/// Running mean and standard error (Welford).
class MeanAccumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  [[nodiscard]] std::uint64_t count() const { return n_; }
  [[nodiscard]] double mean() const { return mean_; }
  [[nodiscard]] double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  [[nodiscard]] double standard_error() const {
    return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace spreadlab

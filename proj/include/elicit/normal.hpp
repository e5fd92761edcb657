#pragma once

#include <cmath>
#include <numbers>

namespace elicit {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {
// Mills ratio Phi(-t)/phi(t) for large t, Laplace continued fraction.
inline double mills_ratio(double t) {
  double acc = t;
  for (int k = 60; k >= 1; --k) acc = t + k / acc;
  return 1.0 / acc;
}
}  // namespace detail

/// log Phi(x), accurate in the lower tail (no underflow below -8).
inline double log_normal_cdf(double x) {
  if (x < -8.0) {
    return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) +
           std::log(detail::mills_ratio(-x));
  }
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  return std::log(normal_cdf(x));
}

/// phi(x) / Phi(x), the derivative of log Phi.
inline double inverse_mills(double x) {
  if (x < -8.0) return 1.0 / detail::mills_ratio(-x);
  return normal_pdf(x) / normal_cdf(x);
}

/// log Phi(x) and phi(x) / Phi(x) together, sharing one erfc evaluation.
inline double log_normal_cdf_and_mills(double x, double& mills) {
  if (x < -8.0) {
    const double r = detail::mills_ratio(-x);
    mills = 1.0 / r;
    return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(r);
  }
  if (x > 0.0) {
    const double tail = 0.5 * std::erfc(x / std::numbers::sqrt2);
    mills = normal_pdf(x) / (1.0 - tail);
    return std::log1p(-tail);
  }
  const double cdf = normal_cdf(x);
  mills = normal_pdf(x) / cdf;
  return std::log(cdf);
}

}  // namespace elicit

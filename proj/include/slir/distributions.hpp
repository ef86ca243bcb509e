#ifndef SLIR_DISTRIBUTIONS_HPP
#define SLIR_DISTRIBUTIONS_HPP

#include <cmath>
#include <limits>
#include <numbers>

// Log densities return -infinity outside their support instead of throwing.

namespace slir::dist {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double normal_logpdf(double x, double mean, double sd) {
  if (!(sd > 0) || !std::isfinite(x)) return neg_inf;
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
}

inline double lognormal_logpdf(double x, double mu, double sigma) {
  if (!(x > 0) || !std::isfinite(x)) return neg_inf;
  return normal_logpdf(std::log(x), mu, sigma) - std::log(x);
}

inline double beta_logpdf(double x, double alpha, double beta) {
  if (!(x > 0 && x < 1) || !(alpha > 0) || !(beta > 0)) return neg_inf;
  return (alpha - 1) * std::log(x) + (beta - 1) * std::log1p(-x) + std::lgamma(alpha + beta) -
         std::lgamma(alpha) - std::lgamma(beta);
}

/// Inverse gamma with shape alpha and scale beta.
inline double inv_gamma_logpdf(double x, double alpha, double beta) {
  if (!(x > 0) || !std::isfinite(x) || !(alpha > 0) || !(beta > 0)) return neg_inf;
  return alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1) * std::log(x) - beta / x;
}

inline double uniform_logpdf(double x, double lo, double hi) {
  if (!(x > lo && x < hi)) return neg_inf;
  return -std::log(hi - lo);
}

inline double poisson_logpmf(long long y, double lambda) {
  if (y < 0 || !(lambda >= 0) || !std::isfinite(lambda)) return neg_inf;
  if (lambda == 0) return y == 0 ? 0.0 : neg_inf;
  const double k = static_cast<double>(y);
  return k * std::log(lambda) - lambda - std::lgamma(k + 1);
}

/// Negative binomial with mean mu and variance mu + mu^2 / phi.
inline double negbin2_logpmf(long long y, double mu, double phi) {
  if (y < 0 || !(mu > 0) || !(phi > 0) || !std::isfinite(mu) || std::isnan(phi))
    return neg_inf;
  if (std::isinf(phi)) return poisson_logpmf(y, mu);
  const double k = static_cast<double>(y);
  if (phi > 1e4) {
    // Stirling form of log Gamma(k + phi) - log Gamma(phi), merged with the
    // mean term so the large logarithms cancel analytically.
    auto tail = [](double x) {
      const double x2 = x * x;
      return (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * x2)) / x2) / x;
    };
    return (phi - 0.5) * std::log1p(k / phi) - k + tail(phi + k) - tail(phi) +
           k * std::log1p((k - mu) / (mu + phi)) + k * std::log(mu) - std::lgamma(k + 1) -
           phi * std::log1p(mu / phi);
  }
  return std::lgamma(k + phi) - std::lgamma(phi) - std::lgamma(k + 1) - phi * std::log1p(mu / phi) +
         k * (std::log(mu) - std::log(mu + phi));
}

}  // namespace slir::dist

#endif  // SLIR_DISTRIBUTIONS_HPP

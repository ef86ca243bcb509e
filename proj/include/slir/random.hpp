#ifndef SLIR_RANDOM_HPP
#define SLIR_RANDOM_HPP

#include <cstdint>
#include <random>

namespace slir {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent generator for stream `stream` under a master seed. Chains,
/// predictive draws and synthetic data each take their own stream.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
  const std::uint64_t b = splitmix64(a);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

inline double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

/// Gamma with shape k and scale theta.
inline double draw_gamma(Rng& rng, double shape, double scale) {
  return std::gamma_distribution<double>(shape, scale)(rng);
}

inline double draw_beta(Rng& rng, double alpha, double beta) {
  const double x = draw_gamma(rng, alpha, 1.0);
  const double y = draw_gamma(rng, beta, 1.0);
  return x / (x + y);
}

/// Mean-dispersion negative binomial: mean mu, variance mu + mu^2 / phi,
/// drawn as a gamma-Poisson mixture.
inline long long draw_negbin(Rng& rng, double mu, double phi) {
  if (!(mu > 0)) return 0;
  const double lambda = draw_gamma(rng, phi, mu / phi);
  if (!(lambda > 0)) return 0;
  return std::poisson_distribution<long long>(lambda)(rng);
}

}  // namespace slir

#endif  // SLIR_RANDOM_HPP

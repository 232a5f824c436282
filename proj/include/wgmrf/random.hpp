#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wgmrf {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform on [0, 1) determined by (key, counter) alone, so per-site draws
/// do not depend on thread scheduling.
inline double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  const std::uint64_t h = splitmix64(key ^ splitmix64(counter));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double sample_normal(Rng& rng) { return std::normal_distribution<double>()(rng); }

/// Inverse-gamma draw with the given shape and rate.
inline double sample_inverse_gamma(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return 1.0 / g(rng);
}

/// log(theta / (upper - theta)) and its inverse.
inline double logit_box(double theta, double upper) { return std::log(theta / (upper - theta)); }
inline double inv_logit_box(double eta, double upper) {
  return eta >= 0.0 ? upper / (1.0 + std::exp(-eta)) : upper * std::exp(eta) / (1.0 + std::exp(eta));
}

/// Random-walk step adapted during burn-in toward an acceptance window.
struct AdaptiveStep {
  double step = 0.5;
  int accepted = 0;
  int proposed = 0;
  long long total_accepted = 0;
  long long total_proposed = 0;

  void record(bool accept) {
    accepted += accept ? 1 : 0;
    ++proposed;
    total_accepted += accept ? 1 : 0;
    ++total_proposed;
  }
  /// Applies the multiplicative rule to the current window and resets it.
  void adapt(double low, double high) {
    if (proposed == 0) return;
    const double rate = static_cast<double>(accepted) / proposed;
    if (rate > high) step *= 1.2;
    else if (rate < low) step *= 0.8;
    accepted = 0;
    proposed = 0;
  }
  double acceptance_rate() const {
    return total_proposed == 0 ? 0.0 : static_cast<double>(total_accepted) / total_proposed;
  }
};

}  // namespace wgmrf

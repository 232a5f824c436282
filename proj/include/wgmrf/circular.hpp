#pragma once

#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace wgmrf {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// A direction in radians, always held in [0, 2pi).
class Angle {
 public:
  constexpr Angle() = default;
  /// Wraps any finite value onto [0, 2pi); throws InvalidArgument otherwise.
  explicit Angle(double radians);

  double value() const noexcept { return value_; }
  /// Same direction expressed in (-pi, pi].
  double signed_value() const noexcept;

  friend Angle operator+(Angle a, double delta) { return Angle(a.value_ + delta); }
  friend Angle operator-(Angle a, double delta) { return Angle(a.value_ - delta); }
  friend bool operator==(Angle a, Angle b) noexcept { return a.value_ == b.value_; }

 private:
  double value_ = 0.0;
};

Angle wrap_angle(double x);

/// Two-argument arctangent mapped onto [0, 2pi). Argument order follows the
/// circular-statistics convention: sine component first.
Angle atan2_star(double s, double c);

/// Wrapped normal parameters on the unwrapped (linear) scale.
struct WnParams {
  double mu = 0.0;
  double sigma2 = 1.0;

  WnParams() = default;
  WnParams(double mu, double sigma2);

  double sigma() const;
  double concentration() const;
  Angle mean_direction() const { return wrap_angle(mu); }
};

/// Log density of WN(mu, sigma2) at y, summing 2m+1 shifted normal kernels
/// centred on the nearest copy of the mean.
double wn_log_density(Angle y, const WnParams& params, int m);

/// p-th trigonometric moment E[exp(i p Y)].
std::complex<double> wn_trig_moment(int p, const WnParams& params);

struct MomentEstimates {
  Angle mean_direction;
  double concentration = 0.0;
  double sigma2 = 0.0;
};

MomentEstimates circular_moment_estimates(std::span<const Angle> angles);

enum class TruncationRule {
  /// ceil(1 + 3 sigma / 2pi): dominates the real-valued bound.
  conservative,
  /// floor(1 + 3 sigma / 2pi): reproduces the piecewise table
  /// (1 below 2pi/3, 2 below 4pi/3, ...).
  piecewise,
};

int truncation_bound(double sigma,
                     TruncationRule rule = TruncationRule::conservative);

/// Full-conditional probabilities of the winding number k in {-m..m} for an
/// observed angle y whose latent linear value is N(mean, sd^2).
std::vector<double> winding_weights(double y, double mean, double sd, int m);

/// Allocation-free variant; `out` must hold 2m+1 entries.
void winding_weights(double y, double mean, double sd, int m,
                     std::span<double> out);

/// Winding number drawn from the weights above using a single uniform u in
/// [0, 1).
int sample_winding(double y, double mean, double sd, int m, double u);

}  // namespace wgmrf

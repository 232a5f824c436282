#include "wgmrf/circular.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "wgmrf/errors.hpp"

namespace wgmrf {

namespace {

constexpr int kMaxWinding = 64;
const double kLogSqrtTwoPi = 0.5 * std::log(kTwoPi);

void check_bound(int m) {
  if (m < 1) throw InvalidArgument("winding bound m must be >= 1, got " + std::to_string(m));
  if (m > kMaxWinding)
    throw InvalidArgument("winding bound m must be <= " + std::to_string(kMaxWinding));
}

// Writes log phi((y + 2pi k - mean) / sd) for k = -m..m (up to a shared
// constant) and returns the maximum.
double log_kernels(double y, double mean, double sd, int m, double* out) {
  double best = -std::numeric_limits<double>::infinity();
  for (int k = -m; k <= m; ++k) {
    const double z = (y + kTwoPi * k - mean) / sd;
    const double v = -0.5 * z * z;
    out[k + m] = v;
    best = std::max(best, v);
  }
  return best;
}

}  // namespace

Angle::Angle(double radians) {
  if (!std::isfinite(radians)) throw InvalidArgument("angle must be finite");
  if (radians >= 0.0 && radians < kTwoPi) {
    value_ = radians;
    return;
  }
  double v = radians - kTwoPi * std::floor(radians / kTwoPi);
  // Rounding can land exactly on 2pi (or a hair below 0) for inputs just
  // below a multiple of 2pi.
  if (v >= kTwoPi || v < 0.0) v = 0.0;
  value_ = v;
}

double Angle::signed_value() const noexcept {
  return value_ > kPi ? value_ - kTwoPi : value_;
}

Angle wrap_angle(double x) { return Angle(x); }

Angle atan2_star(double s, double c) {
  if (!std::isfinite(s) || !std::isfinite(c))
    throw InvalidArgument("atan2_star requires finite arguments");
  if (s == 0.0 && c == 0.0)
    throw DegenerateError("mean direction undefined for a zero resultant");
  double theta = std::atan2(s, c);
  if (theta < 0.0) theta += kTwoPi;
  return Angle(theta);
}

WnParams::WnParams(double mu_, double sigma2_) : mu(mu_), sigma2(sigma2_) {
  if (!std::isfinite(mu)) throw InvalidArgument("wrapped normal mean must be finite");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw InvalidArgument("wrapped normal variance must be positive and finite");
}

double WnParams::sigma() const { return std::sqrt(sigma2); }

double WnParams::concentration() const { return std::exp(-0.5 * sigma2); }

double wn_log_density(Angle y, const WnParams& params, int m) {
  check_bound(m);
  // The density depends on mu only modulo 2pi; centre the difference on
  // [-pi, pi) so the truncated sum keeps the dominant kernels.
  double d = y.value() - params.mean_direction().value();
  if (d >= kPi) d -= kTwoPi;
  if (d < -kPi) d += kTwoPi;
  const double sd = params.sigma();
  std::array<double, 2 * kMaxWinding + 1> logs{};
  const double best = log_kernels(d, 0.0, sd, m, logs.data());
  double sum = 0.0;
  for (int i = 0; i < 2 * m + 1; ++i) sum += std::exp(logs[i] - best);
  return best + std::log(sum) - std::log(sd) - kLogSqrtTwoPi;
}

std::complex<double> wn_trig_moment(int p, const WnParams& params) {
  if (p < 1) throw InvalidArgument("moment order must be >= 1");
  const double modulus = std::exp(-0.5 * p * p * params.sigma2);
  return {modulus * std::cos(p * params.mu), modulus * std::sin(p * params.mu)};
}

MomentEstimates circular_moment_estimates(std::span<const Angle> angles) {
  if (angles.empty()) throw InvalidArgument("moment estimates need at least one angle");
  double c = 0.0;
  double s = 0.0;
  for (const Angle a : angles) {
    c += std::cos(a.value());
    s += std::sin(a.value());
  }
  c /= static_cast<double>(angles.size());
  s /= static_cast<double>(angles.size());
  const double c_hat = std::min(1.0, std::hypot(c, s));
  // Perfectly balanced samples leave only round-off in the resultant.
  if (c_hat < 1e-12)
    throw DegenerateError("sample resultant length is zero; variance estimate undefined");
  MomentEstimates out;
  out.mean_direction = atan2_star(s, c);
  out.concentration = c_hat;
  out.sigma2 = -2.0 * std::log(c_hat);
  return out;
}

int truncation_bound(double sigma, TruncationRule rule) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw InvalidArgument("truncation bound needs sigma > 0");
  const double real_bound = 1.0 + 3.0 * sigma / kTwoPi;
  const double b = rule == TruncationRule::conservative ? std::ceil(real_bound)
                                                        : std::floor(real_bound);
  return std::max(1, static_cast<int>(b));
}

void winding_weights(double y, double mean, double sd, int m, std::span<double> out) {
  check_bound(m);
  if (!(sd > 0.0)) throw InvalidArgument("winding weights need sd > 0");
  if (out.size() != static_cast<std::size_t>(2 * m + 1))
    throw InvalidArgument("winding weight buffer must hold 2m+1 entries");
  const double best = log_kernels(y, mean, sd, m, out.data());
  double sum = 0.0;
  for (double& w : out) {
    w = std::exp(w - best);
    sum += w;
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericError("winding weights failed to normalize");
  for (double& w : out) w /= sum;
}

std::vector<double> winding_weights(double y, double mean, double sd, int m) {
  check_bound(m);
  std::vector<double> w(2 * m + 1);
  winding_weights(y, mean, sd, m, w);
  return w;
}

int sample_winding(double y, double mean, double sd, int m, double u) {
  std::array<double, 2 * kMaxWinding + 1> w{};
  check_bound(m);
  const std::span<double> view(w.data(), 2 * m + 1);
  winding_weights(y, mean, sd, m, view);
  double acc = 0.0;
  for (int i = 0; i < 2 * m; ++i) {
    acc += view[i];
    if (u < acc) return i - m;
  }
  return m;
}

}  // namespace wgmrf

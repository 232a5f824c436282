#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "wgmrf/circular.hpp"
#include "wgmrf/errors.hpp"

using namespace wgmrf;

namespace {

// Brute-force weights in long double, no log-space tricks.
std::vector<long double> oracle_weights(double y, double mean, double sd, int m) {
  std::vector<long double> w(2 * m + 1);
  long double sum = 0;
  for (int k = -m; k <= m; ++k) {
    const long double z = (static_cast<long double>(y) + 2.0L * std::numbers::pi_v<long double> * k -
                           mean) / sd;
    w[k + m] = std::exp(-0.5L * z * z);
    sum += w[k + m];
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

TEST_CASE("wrap_angle maps onto [0, 2pi)") {
  CHECK(wrap_angle(0.0).value() == 0.0);
  CHECK(wrap_angle(kTwoPi).value() == doctest::Approx(0.0));
  CHECK(wrap_angle(-0.5).value() == doctest::Approx(kTwoPi - 0.5).epsilon(1e-15));
  CHECK(wrap_angle(7.0).value() == doctest::Approx(7.0 - kTwoPi).epsilon(1e-15));
  CHECK(wrap_angle(-1e-18).value() < kTwoPi);
  CHECK_THROWS_AS(wrap_angle(std::nan("")), InvalidArgument);
  CHECK_THROWS_AS(wrap_angle(INFINITY), InvalidArgument);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(rng);
    const Angle a = wrap_angle(x);
    REQUIRE(a.value() >= 0.0);
    REQUIRE(a.value() < kTwoPi);
    REQUIRE(wrap_angle(a.value()) == a);
    REQUIRE((a + x).value() < kTwoPi);
    REQUIRE((a - x).value() >= 0.0);
  }
  for (double x : {std::nextafter(kTwoPi, 0.0), -std::nextafter(kTwoPi, 0.0), -kTwoPi, 4 * kPi,
                   -std::nextafter(0.0, 1.0)}) {
    const Angle a = wrap_angle(x);
    CHECK(a.value() >= 0.0);
    CHECK(a.value() < kTwoPi);
  }
}

TEST_CASE("signed value lies in (-pi, pi]") {
  CHECK(Angle(kPi).signed_value() == doctest::Approx(kPi));
  CHECK(Angle(kPi + 0.1).signed_value() == doctest::Approx(-kPi + 0.1));
  CHECK(Angle(-2.2627).signed_value() == doctest::Approx(-2.2627));
}

TEST_CASE("atan2_star") {
  CHECK(atan2_star(0.0, 1.0).value() == 0.0);
  CHECK(atan2_star(1.0, 0.0).value() == doctest::Approx(kPi / 2));
  CHECK(atan2_star(-1.0, 0.0).value() == doctest::Approx(3 * kPi / 2));
  CHECK(atan2_star(0.0, -1.0).value() == doctest::Approx(kPi));
  CHECK(atan2_star(-1e-300, -1.0).value() < kTwoPi);
  CHECK_THROWS_AS(atan2_star(0.0, 0.0), DegenerateError);
}

TEST_CASE("wrapped normal parameters validate") {
  CHECK_THROWS_AS(WnParams(0.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(WnParams(0.0, -1.0), InvalidArgument);
  CHECK_THROWS_AS(WnParams(NAN, 1.0), InvalidArgument);
  const WnParams p(3.0, 10.0 / 3.0);
  CHECK(p.concentration() == doctest::Approx(std::exp(-5.0 / 3.0)));
}

TEST_CASE("density integrates to one") {
  for (double sigma : {0.3, 1.0, 2.0, 4.0}) {
    const WnParams p(1.3, sigma * sigma);
    const int m = truncation_bound(sigma) + 2;
    const int n = 4000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(wn_log_density(Angle((i + 0.5) * kTwoPi / n), p, m));
    CHECK(std::abs(sum * kTwoPi / n - 1.0) < 1e-6);
  }
}

TEST_CASE("density is invariant to the unwrapped mean") {
  const WnParams a(0.4, 2.0);
  const WnParams b(0.4 + 6 * kTwoPi, 2.0);
  for (double y : {0.0, 1.0, 3.0, 6.0})
    CHECK(wn_log_density(Angle(y), a, 3) == doctest::Approx(wn_log_density(Angle(y), b, 3)).epsilon(1e-12));
}

TEST_CASE("truncation adequacy") {
  auto max_gap = [](double sigma) {
    double worst = 0.0;
    const int m = truncation_bound(sigma);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        const Angle y(i * kTwoPi / 10);
        const WnParams p(j * kTwoPi / 10 - 3.0, sigma * sigma);
        worst = std::max(worst, std::abs(wn_log_density(y, p, m) - wn_log_density(y, p, 64)));
      }
    return worst;
  };
  for (double sigma = 0.1; sigma <= 3.5; sigma += 0.1) {
    CAPTURE(sigma);
    CHECK(max_gap(sigma) < 1e-8);
  }
  // Above about 3.66 the ceiling of 1 + 3 sigma / 2pi stays at 2 and the
  // third shifted kernel is no longer negligible at the 1e-8 level.
  CHECK(max_gap(4 * kPi / 3 - 1e-9) < 5e-6);
}

TEST_CASE("truncation bound") {
  CHECK(truncation_bound(1.0) == 2);
  CHECK(truncation_bound(3.0) == 3);
  CHECK(truncation_bound(1.9220) == 2);
  CHECK(truncation_bound(1.0, TruncationRule::piecewise) == 1);
  CHECK(truncation_bound(3.0, TruncationRule::piecewise) == 2);
  CHECK(truncation_bound(1.9220, TruncationRule::piecewise) == 1);
  CHECK(truncation_bound(2 * kPi / 3 - 1e-9, TruncationRule::piecewise) == 1);
  CHECK(truncation_bound(2 * kPi / 3 + 1e-9, TruncationRule::piecewise) == 2);
  CHECK(truncation_bound(1e-9) == 2);
  CHECK_THROWS_AS(truncation_bound(0.0), InvalidArgument);
  CHECK_THROWS_AS(truncation_bound(-1.0), InvalidArgument);
  for (double s = 0.01; s < 20; s += 0.07) {
    CHECK(truncation_bound(s) >= 1 + 3 * s / kTwoPi);
    CHECK(truncation_bound(s) >= truncation_bound(s, TruncationRule::piecewise));
  }
}

TEST_CASE("trigonometric moments") {
  const WnParams p(3.0, 10.0 / 3.0);
  const auto m1 = wn_trig_moment(1, p);
  CHECK(std::abs(m1) == doctest::Approx(std::exp(-5.0 / 3.0)));
  CHECK(std::arg(m1) == doctest::Approx(3.0));
  const auto m2 = wn_trig_moment(2, p);
  CHECK(std::abs(m2) == doctest::Approx(std::exp(-2.0 * 10.0 / 3.0)));
  CHECK_THROWS_AS(wn_trig_moment(0, p), InvalidArgument);

  // Quadrature of the density reproduces the closed form.
  const WnParams q(0.7, 1.2);
  const int n = 4000;
  std::complex<double> acc{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    const double y = (i + 0.5) * kTwoPi / n;
    acc += std::exp(wn_log_density(Angle(y), q, 6)) * std::polar(1.0, 2 * y);
  }
  acc *= kTwoPi / n;
  CHECK(std::abs(acc - wn_trig_moment(2, q)) < 1e-9);
}

TEST_CASE("moment estimates recover the generating parameters") {
  const double mu = 3.0;
  const double sigma2 = 10.0 / 3.0;
  const int n = 1000000;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z(mu, std::sqrt(sigma2));
  std::vector<Angle> ys;
  ys.reserve(n);
  for (int i = 0; i < n; ++i) ys.emplace_back(z(rng));
  const auto est = circular_moment_estimates(ys);
  const double rho = std::exp(-sigma2 / 2);
  const double rho4 = std::exp(-2 * sigma2);
  // Delta-method standard errors of the resultant length and direction.
  const double var_c = 0.5 * (1 + rho4) - rho * rho;
  const double se_c = std::sqrt(var_c / n);
  const double se_mu = std::sqrt(0.5 * (1 - rho4) / n) / rho;
  CHECK(std::abs(est.concentration - rho) < 3 * se_c);
  CHECK(std::abs(est.mean_direction.value() - mu) < 3 * se_mu);
  CHECK(est.sigma2 == doctest::Approx(-2 * std::log(est.concentration)));
}

TEST_CASE("moment estimates on degenerate samples") {
  std::vector<Angle> balanced{Angle(0.0), Angle(kPi)};
  CHECK_THROWS_AS(circular_moment_estimates(balanced), DegenerateError);
  CHECK_THROWS_AS(circular_moment_estimates(std::vector<Angle>{}), InvalidArgument);
  std::vector<Angle> same(5, Angle(1.0));
  const auto est = circular_moment_estimates(same);
  CHECK(est.concentration == doctest::Approx(1.0));
  CHECK(est.sigma2 >= 0.0);
}

TEST_CASE("winding weights") {
  SUBCASE("dominant central term") {
    const auto w = winding_weights(1.0, 1.0, 0.1, 3);
    CHECK(w.size() == 7);
    CHECK(w[3] == doctest::Approx(1.0));
  }
  SUBCASE("shifted dominant term") {
    const auto w = winding_weights(0.5, 0.5 + kTwoPi, 0.1, 3);
    CHECK(w[4] == doctest::Approx(1.0));
  }
  SUBCASE("symmetric case against long double oracle") {
    const auto w = winding_weights(0.0, kPi, 4.0, 3);
    const auto o = oracle_weights(0.0, kPi, 4.0, 3);
    for (int i = 0; i < 7; ++i) CHECK(std::abs(w[i] - static_cast<double>(o[i])) < 1e-12);
    // y - mean = -pi: kernel k and kernel 1 - k sit symmetrically about pi.
    for (int k = -2; k <= 3; ++k) CHECK(std::abs(w[k + 3] - w[1 - k + 3]) < 1e-12);
  }
  SUBCASE("far tails still normalize") {
    const auto w = winding_weights(0.0, 500.0, 0.01, 3);
    double s = 0.0;
    for (double v : w) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
    CHECK(w[6] == doctest::Approx(1.0));
  }
  SUBCASE("random inputs sum to one and match the oracle") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 2000; ++t) {
      const double y = kTwoPi * u(rng);
      const double mean = 40 * u(rng) - 20;
      const double sd = 0.05 + 5 * u(rng);
      const int m = 1 + static_cast<int>(6 * u(rng));
      const auto w = winding_weights(y, mean, sd, m);
      double s = 0.0;
      for (double v : w) s += v;
      REQUIRE(std::abs(s - 1.0) < 1e-12);
      if (std::abs(y - mean) < 10 * sd) {
        const auto o = oracle_weights(y, mean, sd, m);
        for (int i = 0; i < 2 * m + 1; ++i) REQUIRE(std::abs(w[i] - static_cast<double>(o[i])) < 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(winding_weights(0.0, 0.0, 0.0, 3), InvalidArgument);
  CHECK_THROWS_AS(winding_weights(0.0, 0.0, 1.0, 0), InvalidArgument);
}

TEST_CASE("sample_winding follows the weights") {
  const auto w = winding_weights(0.3, 4.0, 2.5, 2);
  std::vector<int> counts(5, 0);
  const int n = 200000;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) ++counts[sample_winding(0.3, 4.0, 2.5, 2, u(rng)) + 2];
  for (int i = 0; i < 5; ++i) {
    const double se = std::sqrt(w[i] * (1 - w[i]) / n);
    CHECK(std::abs(counts[i] / double(n) - w[i]) < 4 * se + 1e-12);
  }
  CHECK(sample_winding(0.3, 4.0, 2.5, 2, 0.0) >= -2);
  CHECK(sample_winding(0.3, 4.0, 2.5, 2, std::nextafter(1.0, 0.0)) <= 2);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "wgmrf/errors.hpp"
#include "wgmrf/random.hpp"
#include "wgmrf/validation.hpp"
#include "wgmrf/wgmrf_model.hpp"

using namespace wgmrf;

namespace {

std::vector<Angle> angles_of(std::initializer_list<double> v) {
  std::vector<Angle> out;
  for (double x : v) out.emplace_back(x);
  return out;
}

// Written straight from the metric definitions, using std::arg for the
// circular difference and complex means for the centering.
struct Oracle {
  double sc, crmse, cmae, re, rho, cbar;
};

Oracle oracle(const std::vector<double>& p, const std::vector<double>& y, const std::vector<double>& c) {
  const double n = static_cast<double>(p.size());
  Oracle o{};
  std::complex<double> e = 0.0, my = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    o.sc += std::pow(std::cos(y[i]) - std::cos(p[i]), 2) + std::pow(std::sin(y[i]) - std::sin(p[i]), 2);
    const double d = std::arg(std::polar(1.0, p[i] - y[i]));
    o.crmse += d * d;
    o.cmae += std::abs(d);
    e += std::polar(1.0, d);
    my += std::polar(1.0, y[i]);
    mp += std::polar(1.0, p[i]);
    o.cbar += c[i];
  }
  o.sc = std::sqrt(o.sc / n);
  o.crmse = std::sqrt(o.crmse / n);
  o.cmae /= n;
  o.re = std::abs(e / n);
  o.cbar /= n;
  double num = 0.0, a2 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = std::sin(y[i] - std::arg(my));
    const double b = std::sin(p[i] - std::arg(mp));
    num += a * b;
    a2 += a * a;
    b2 += b * b;
  }
  o.rho = num / std::sqrt(a2 * b2);
  return o;
}

std::vector<Location> grid_locations(int nx, int ny) {
  std::vector<Location> out;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out.push_back(Location::planar(i, j));
  return out;
}

}  // namespace

TEST_CASE("circular difference conventions") {
  for (double t : {0.0, 1.0, 3.0, 6.2}) CHECK(circular_difference(Angle(t), Angle(t)) == 0.0);
  CHECK(circular_difference(Angle(0.1), Angle(kTwoPi - 0.1)) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(circular_difference(Angle(kTwoPi - 0.1), Angle(0.1)) == doctest::Approx(-0.2).epsilon(1e-12));
  for (double t : {0.0, 0.3, 1.0, 2.5, 4.0, 6.0}) {
    CHECK(circular_difference(Angle(t + kPi), Angle(t)) == kPi);
    CHECK(circular_difference(Angle(t), Angle(t + kPi)) == kPi);
  }
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (int k = 0; k < 1000; ++k) {
    const Angle a(u(rng)), b(u(rng));
    const double d = circular_difference(a, b);
    CHECK(d > -kPi);
    CHECK(d <= kPi);
    CHECK(d == doctest::Approx(std::arg(std::polar(1.0, a.value() - b.value()))).epsilon(1e-12));
  }
}

TEST_CASE("metrics on a hand fixture match the direct formulas") {
  const std::vector<double> p{0.3, 6.1, 2.0, 4.4, 1.2};
  const std::vector<double> y{0.1, 0.2, 2.9, 4.0, 5.9};
  const std::vector<double> c{0.9, 0.5, 0.7, 0.2, 0.35};
  std::vector<Angle> pa, ya;
  for (double v : p) pa.emplace_back(v);
  for (double v : y) ya.emplace_back(v);
  const MetricsReport m = metrics_suite(pa, c, ya);
  const Oracle o = oracle(p, y, c);
  CHECK(m.n == 5);
  CHECK(std::abs(m.sc_rmse - o.sc) < 1e-12);
  CHECK(std::abs(m.crmse - o.crmse) < 1e-12);
  CHECK(std::abs(m.cmae - o.cmae) < 1e-12);
  CHECK(std::abs(m.resultant_length - o.re) < 1e-12);
  REQUIRE(m.circular_correlation.has_value());
  CHECK(std::abs(*m.circular_correlation - o.rho) < 1e-12);
  CHECK(std::abs(m.avg_concentration - o.cbar) < 1e-12);
}

TEST_CASE("metric limits") {
  const auto y = angles_of({0.1, 1.0, 2.0, 3.5, 5.0, 6.0});
  const std::vector<double> ones(y.size(), 1.0);
  const MetricsReport perfect = metrics_suite(y, ones, y);
  CHECK(perfect.sc_rmse == 0.0);
  CHECK(perfect.crmse == 0.0);
  CHECK(perfect.cmae == 0.0);
  CHECK(perfect.resultant_length == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(*perfect.circular_correlation == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.avg_concentration == 1.0);

  std::vector<Angle> anti;
  for (const Angle& a : y) anti.push_back(a + kPi);
  const MetricsReport m = metrics_suite(anti, ones, y);
  CHECK(m.cmae == doctest::Approx(kPi).epsilon(1e-14));
  CHECK(m.crmse == doctest::Approx(kPi).epsilon(1e-14));
  CHECK(m.resultant_length == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.sc_rmse == doctest::Approx(2.0).epsilon(1e-12));

  const auto constant = angles_of({1.0, 1.0, 1.0});
  const MetricsReport d = metrics_suite(constant, std::vector<double>(3, 0.5), angles_of({0.2, 1.4, 2.0}));
  CHECK_FALSE(d.circular_correlation.has_value());

  CHECK_THROWS_AS(metrics_suite(y, ones, angles_of({1.0})), InvalidArgument);
  CHECK_THROWS_AS(metrics_suite(std::vector<Angle>{}, std::vector<double>{}, std::vector<Angle>{}),
                  InvalidArgument);
  std::vector<double> bad = ones;
  bad[0] = 1.5;
  CHECK_THROWS_AS(metrics_suite(y, bad, y), InvalidArgument);
}

TEST_CASE("metric identities and ranges on random fixtures") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::uniform_real_distribution<double> uc(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + rep % 40;
    std::vector<Angle> p, y;
    std::vector<double> c;
    for (int i = 0; i < n; ++i) {
      y.emplace_back(u(rng));
      p.push_back(y.back() + 0.8 * sample_normal(rng));
      c.push_back(uc(rng));
    }
    const MetricsReport m = metrics_suite(p, c, y);
    double alt = 0.0;
    for (int i = 0; i < n; ++i) alt += 2.0 - 2.0 * std::cos(circular_difference(p[i], y[i]));
    CHECK(std::abs(m.sc_rmse * m.sc_rmse - alt / n) < 1e-12);
    CHECK(m.sc_rmse >= 0.0);
    CHECK(m.sc_rmse <= 2.0 * std::sqrt(2.0));
    CHECK(m.crmse <= kPi);
    CHECK(m.cmae <= m.crmse + 1e-15);
    CHECK(m.resultant_length >= 0.0);
    CHECK(m.resultant_length <= 1.0);
    CHECK(m.avg_concentration >= 0.0);
    CHECK(m.avg_concentration <= 1.0);
    if (m.circular_correlation) {
      CHECK(*m.circular_correlation >= -1.0);
      CHECK(*m.circular_correlation <= 1.0);
    }

    // Shared rotation.
    const double shift = u(rng);
    std::vector<Angle> pr, yr;
    for (int i = 0; i < n; ++i) {
      pr.push_back(p[i] + shift);
      yr.push_back(y[i] + shift);
    }
    const MetricsReport r = metrics_suite(pr, c, yr);
    CHECK(std::abs(r.sc_rmse - m.sc_rmse) < 1e-12);
    CHECK(std::abs(r.crmse - m.crmse) < 1e-12);
    CHECK(std::abs(r.cmae - m.cmae) < 1e-12);
    CHECK(std::abs(r.resultant_length - m.resultant_length) < 1e-12);
    REQUIRE(r.circular_correlation.has_value() == m.circular_correlation.has_value());
    if (m.circular_correlation) CHECK(std::abs(*r.circular_correlation - *m.circular_correlation) < 1e-10);
  }
}

TEST_CASE("metrics accept prediction records") {
  std::vector<CircularPrediction> pred(2);
  pred[0].mean_direction = Angle(1.0);
  pred[0].concentration = 0.4;
  pred[1].mean_direction = Angle(2.0);
  pred[1].concentration = 0.6;
  const MetricsReport m = metrics_suite(pred, angles_of({1.0, 2.0}));
  CHECK(m.cmae == 0.0);
  CHECK(m.avg_concentration == doctest::Approx(0.5));
}

TEST_CASE("block folds: stripes, single block, determinism") {
  const auto locs = grid_locations(50, 20);
  const FoldAssignment s = spatial_block_folds(locs, 1, 5, 5, 42);
  CHECK(s.warnings.empty());
  // Each of the five columns of blocks is one fold, so fold is a function of x.
  for (std::size_t i = 0; i < locs.size(); ++i) {
    const int col = std::min(4, static_cast<int>(locs[i].x / 49.0 * 5));
    CHECK(s.block[i] == col);
  }
  std::set<int> seen;
  for (int col = 0; col < 5; ++col) {
    std::set<int> folds;
    for (std::size_t i = 0; i < locs.size(); ++i)
      if (s.block[i] == col) folds.insert(s.fold[i]);
    CHECK(folds.size() == 1);
    seen.insert(*folds.begin());
  }
  CHECK(seen.size() == 5);

  const FoldAssignment one = spatial_block_folds(locs, 1, 1, 4, 1);
  CHECK(std::all_of(one.fold.begin(), one.fold.end(), [&](int f) { return f == one.fold[0]; }));
  CHECK(one.warnings.size() == 3);

  const FoldAssignment a = spatial_block_folds(locs, 6, 7, 10, 99);
  const FoldAssignment b = spatial_block_folds(locs, 6, 7, 10, 99);
  CHECK(a.fold == b.fold);
  CHECK(a.seed == 99);
  const FoldAssignment c = spatial_block_folds(locs, 6, 7, 10, 100);
  CHECK(a.fold != c.fold);
  for (std::size_t i = 0; i < locs.size(); ++i) {
    CHECK(a.fold[i] >= 1);
    CHECK(a.fold[i] <= 10);
    for (std::size_t j = i + 1; j < locs.size(); j += 37)
      if (a.block[i] == a.block[j]) CHECK(a.fold[i] == a.fold[j]);
  }
  // 42 blocks dealt round-robin: folds get 4 or 5 blocks.
  std::vector<int> blocks_per_fold(10, 0);
  std::set<int> distinct(a.block.begin(), a.block.end());
  for (int blk : distinct) {
    const auto it = std::find(a.block.begin(), a.block.end(), blk);
    ++blocks_per_fold[a.fold[it - a.block.begin()] - 1];
  }
  for (int k : blocks_per_fold) CHECK((k == 4 || k == 5));

  CHECK_THROWS_AS(spatial_block_folds(locs, 2, 2, 1, 0), InvalidArgument);
  CHECK_THROWS_AS(spatial_block_folds(locs, 0, 2, 3, 0), InvalidArgument);
}

TEST_CASE("block folds on 33,845 gridded sites reproduce the split sizes") {
  // A 5 x 6769 lattice with one block per site.
  const auto locs = grid_locations(6769, 5);
  REQUIRE(locs.size() == 33845);
  const FoldAssignment five = spatial_block_folds(locs, 5, 6769, 5, 7);
  for (int n : five.fold_sizes()) CHECK(n == 6769);
  CHECK(five.train_indices(1).size() == 27076);
  const FoldAssignment ten = spatial_block_folds(locs, 5, 6769, 10, 7);
  for (int n : ten.fold_sizes()) {
    CHECK(n >= 3384);
    CHECK(n <= 3385);
  }
}

TEST_CASE("block folds in spherical mode use lon/lat rectangles") {
  std::vector<Location> locs;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 10; ++j) locs.push_back(Location::spherical(40.0 + i, -30.0 + 2.0 * j));
  const FoldAssignment f = spatial_block_folds(locs, 2, 2, 2, 5);
  for (std::size_t i = 0; i < locs.size(); ++i) {
    const int col = locs[i].lon() < 40.0 + 39.0 / 2 ? 0 : 1;
    const int row = locs[i].lat() < -30.0 + 18.0 / 2 ? 0 : 1;
    CHECK(f.block[i] == row * 2 + col);
  }
  for (int n : f.fold_sizes()) CHECK(n == 200);
}

TEST_CASE("semivariogram of constant and iid fields") {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Location> locs;
  for (int i = 0; i < 400; ++i) locs.push_back(Location::planar(u(rng), u(rng)));
  const std::vector<Angle> flat(locs.size(), Angle(1.3));
  for (const auto& b : empirical_semivariogram_sincos(flat, locs, 8, 12.0)) {
    CHECK(b.pairs > 0);
    CHECK(b.gamma_sin == 0.0);
    CHECK(b.gamma_cos == 0.0);
  }

  // IID WN(1, 0.5): gamma equals the marginal variance of sin Y and cos Y.
  std::vector<Angle> noise;
  for (std::size_t i = 0; i < locs.size(); ++i) noise.emplace_back(1.0 + std::sqrt(0.5) * sample_normal(rng));
  const double e2 = std::exp(-2.0 * 0.5) * std::cos(2.0);
  const double es = std::exp(-0.25) * std::sin(1.0);
  const double ec = std::exp(-0.25) * std::cos(1.0);
  const double var_s = 0.5 * (1.0 - e2) - es * es;
  const double var_c = 0.5 * (1.0 + e2) - ec * ec;
  const auto v = empirical_semivariogram_sincos(noise, locs, 6, 9.0);
  REQUIRE(v.size() == 6);
  std::size_t total = 0;
  for (const auto& b : v) {
    total += b.pairs;
    CHECK(b.gamma_sin == doctest::Approx(var_s).epsilon(0.15));
    CHECK(b.gamma_cos == doctest::Approx(var_c).epsilon(0.15));
  }
  CHECK(total > 0);
  CHECK(v[0].center == doctest::Approx(0.75));

  // Subsampled pairs: reproducible by seed, capped in count.
  VariogramOptions opt;
  opt.max_pairs = 5000;
  opt.seed = 3;
  const auto s1 = empirical_semivariogram_sincos(noise, locs, 6, 20.0, opt);
  const auto s2 = empirical_semivariogram_sincos(noise, locs, 6, 20.0, opt);
  std::size_t sampled = 0;
  for (std::size_t k = 0; k < s1.size(); ++k) {
    CHECK(s1[k].pairs == s2[k].pairs);
    if (s1[k].pairs > 0) CHECK(s1[k].gamma_sin == s2[k].gamma_sin);
    sampled += s1[k].pairs;
  }
  CHECK(sampled == 5000);

  CHECK_THROWS_AS(empirical_semivariogram_sincos(noise, locs, 0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(empirical_semivariogram_sincos(noise, locs, 3, 0.0), InvalidArgument);
  const std::vector<Location> far{Location::planar(0, 0), Location::planar(50, 50)};
  CHECK_THROWS_AS(empirical_semivariogram_sincos(std::vector<Angle>(2, Angle(0.0)), far, 3, 1.0), InvalidArgument);
}

TEST_CASE("semivariogram of a WGMRF field against a dense covariance oracle") {
  const Mesh mesh = build_planar_mesh({0.0, 0.0, 16.0, 16.0}, 1.0, 3.0);
  const FemTriple fem = fem_matrices(mesh);
  const WgmrfParams truth{3.0, 10.0 / 3.0, 3.0, 0.95};
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 16.0);
  std::vector<Location> locs;
  for (int i = 0; i < 120; ++i) locs.push_back(Location::planar(u(rng), u(rng)));
  const ProjectionMatrix a = projection(mesh, locs);

  const Eigen::MatrixXd ad = Eigen::MatrixXd(a.to_eigen());
  const Eigen::MatrixXd q = spde_precision(fem, truth.psi).to_dense();
  Eigen::MatrixXd cov = truth.sigma2 * truth.r * ad * q.inverse() * ad.transpose();
  cov.diagonal().array() += truth.sigma2 * (1.0 - truth.r);

  const int bins = 8;
  const double max_dist = 16.0;
  std::vector<double> os(bins, 0.0), oc(bins, 0.0);
  std::vector<int> on(bins, 0);
  const double c2 = std::cos(2.0 * truth.mu);
  for (std::size_t i = 0; i < locs.size(); ++i)
    for (std::size_t j = i + 1; j < locs.size(); ++j) {
      const double d = geodesic_distance(locs[i], locs[j]);
      if (d > max_dist) continue;
      const int k = std::min(bins - 1, static_cast<int>(d / (max_dist / bins)));
      const double sii = cov(i, i), sjj = cov(j, j), sij = cov(i, j);
      const double e_minus = std::exp(-(sii + sjj - 2 * sij) / 2);
      const double e_plus = std::exp(-(sii + sjj + 2 * sij) / 2) * c2;
      const double s2i = 0.5 * (1 - std::exp(-2 * sii) * c2), s2j = 0.5 * (1 - std::exp(-2 * sjj) * c2);
      const double c2i = 1 - s2i, c2j = 1 - s2j;
      os[k] += 0.5 * (s2i + s2j) - 0.5 * (e_minus - e_plus);
      oc[k] += 0.5 * (c2i + c2j) - 0.5 * (e_minus + e_plus);
      ++on[k];
    }

  const int reps = 300;
  std::vector<double> ms(bins, 0.0), mc(bins, 0.0), vs(bins, 0.0), vc(bins, 0.0);
  for (int rep = 0; rep < reps; ++rep) {
    const Simulation sim = simulate(fem, a, truth, rng);
    const auto v = empirical_semivariogram_sincos(sim.angles, locs, bins, max_dist);
    for (int k = 0; k < bins; ++k) {
      REQUIRE(static_cast<int>(v[k].pairs) == on[k]);
      ms[k] += v[k].gamma_sin;
      mc[k] += v[k].gamma_cos;
      vs[k] += v[k].gamma_sin * v[k].gamma_sin;
      vc[k] += v[k].gamma_cos * v[k].gamma_cos;
    }
  }
  std::vector<double> total(bins);
  for (int k = 0; k < bins; ++k) {
    if (on[k] < 20) continue;
    ms[k] /= reps;
    mc[k] /= reps;
    const double se_s = std::sqrt((vs[k] / reps - ms[k] * ms[k]) / reps);
    const double se_c = std::sqrt((vc[k] / reps - mc[k] * mc[k]) / reps);
    CHECK(std::abs(ms[k] - os[k] / on[k]) < 4.5 * se_s + 1e-3);
    CHECK(std::abs(mc[k] - oc[k] / on[k]) < 4.5 * se_c + 1e-3);
    total[k] = (os[k] + oc[k]) / on[k];
  }
  // Rises from the first bin and levels off near 1 - exp(-sigma2).
  CHECK(total[0] < total[3]);
  CHECK(std::abs(total[5] - total[4]) < 0.1 * total[4]);
}

TEST_CASE("circular histogram") {
  const auto one = circular_histogram(angles_of({0.01, 0.02, 0.03}), 12);
  REQUIRE(one.size() == 12);
  CHECK(one[0].count == 3);
  for (std::size_t k = 1; k < one.size(); ++k) CHECK(one[k].count == 0);
  CHECK(one.back().end == kTwoPi);
  CHECK(one[1].start == doctest::Approx(kTwoPi / 12));
  CHECK_THROWS_AS(circular_histogram(angles_of({1.0}), 1), InvalidArgument);

  Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::vector<Angle> a;
  const std::size_t n = 1'000'000;
  a.reserve(n);
  for (std::size_t i = 0; i < n; ++i) a.emplace_back(u(rng));
  const auto h = circular_histogram(a, 36);
  std::size_t sum = 0;
  const double p = 1.0 / 36;
  const double sd = std::sqrt(n * p * (1 - p));
  for (const auto& b : h) {
    sum += b.count;
    CHECK(std::abs(static_cast<double>(b.count) - n * p) < 4.0 * sd);
  }
  CHECK(sum == n);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wgmrf/baselines.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/random.hpp"
#include "wgmrf/wgmrf_model.hpp"

namespace geweke {

using Draws = std::vector<std::vector<double>>;  // draws[t][j]

struct Comparison {
  std::vector<double> z;
  std::vector<double> p;
  double min_p = 1.0;
};

inline double mean_of(const Draws& d, std::size_t j) {
  double s = 0.0;
  for (const auto& row : d) s += row[j];
  return s / static_cast<double>(d.size());
}

/// Squared standard error of the mean by non-overlapping batch means.
inline double batch_se2(const Draws& d, std::size_t j, int batches) {
  const std::size_t len = d.size() / static_cast<std::size_t>(batches);
  std::vector<double> bm(batches, 0.0);
  for (int b = 0; b < batches; ++b) {
    for (std::size_t t = b * len; t < (b + 1) * len; ++t) bm[b] += d[t][j];
    bm[b] /= static_cast<double>(len);
  }
  double m = 0.0;
  for (double v : bm) m += v;
  m /= batches;
  double v = 0.0;
  for (double x : bm) v += (x - m) * (x - m);
  return v / (batches - 1) / batches;
}

/// Two-sample z tests of the means of each column (independent marginal
/// draws against a successive-conditional chain).
inline Comparison compare(const Draws& marginal, const Draws& chain, int batches = 50) {
  Comparison c;
  const std::size_t k = marginal.front().size();
  for (std::size_t j = 0; j < k; ++j) {
    const double ma = mean_of(marginal, j);
    double va = 0.0;
    for (const auto& row : marginal) va += (row[j] - ma) * (row[j] - ma);
    va /= static_cast<double>(marginal.size() - 1) * static_cast<double>(marginal.size());
    const double z = (mean_of(chain, j) - ma) / std::sqrt(va + batch_se2(chain, j, batches));
    c.z.push_back(z);
    c.p.push_back(std::erfc(std::abs(z) / std::sqrt(2.0)));
    c.min_p = std::min(c.min_p, c.p.back());
  }
  return c;
}

/// Test functions: the four parameters and their squares.
inline std::vector<double> moments(const wgmrf::WgmrfParams& p) {
  return {p.mu, p.sigma2, p.psi, p.r, p.mu * p.mu, p.sigma2 * p.sigma2, p.psi * p.psi, p.r * p.r};
}

/// Tiny WGMRF instance with informative priors so the chain moves quickly.
struct WgmrfFixture {
  wgmrf::Mesh mesh;
  wgmrf::FemTriple fem;
  wgmrf::WgmrfData data;
  wgmrf::WgmrfConfig config;
  std::vector<wgmrf::Location> locations;

  explicit WgmrfFixture(int n_sites = 20, std::uint64_t seed = 7)
      : mesh(wgmrf::build_planar_mesh({0.0, 0.0, 1.0, 1.0}, 0.34, 0.0)), fem(wgmrf::fem_matrices(mesh)) {
    wgmrf::Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n_sites; ++i) locations.push_back(wgmrf::Location::planar(u(rng), u(rng)));
    data.A = wgmrf::projection(mesh, locations);
    data.angles.assign(n_sites, wgmrf::Angle(0.0));
    config.delta = 1.5;
    config.mu_prior_scale = 1.0;
    config.ig_shape = 10.0;
    config.ig_rate = 2.0;
    config.iterations = 2;
    config.burn_in = 1;
    config.init = wgmrf::WgmrfParams{0.0, 0.2, 0.75, 0.5};
  }

  wgmrf::WgmrfParams draw_prior(wgmrf::Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    wgmrf::WgmrfParams p;
    p.sigma2 = wgmrf::sample_inverse_gamma(config.ig_shape, config.ig_rate, rng);
    p.mu = config.mu_prior_scale * std::sqrt(p.sigma2) * wgmrf::sample_normal(rng);
    do p.psi = config.delta * u(rng); while (!(p.psi > 0.0));
    do p.r = u(rng); while (!(p.r > 0.0));
    return p;
  }
};

/// Update selection mask bits.
enum Step : unsigned { kWinding = 1, kEps = 2, kMu = 4, kSigma2 = 8, kPsi = 16, kR = 32, kAll = 63 };

/// Parameters, their squares, two eps* summaries and the winding total.
inline std::vector<double> state_stats(const wgmrf::WgmrfParams& p, const Eigen::VectorXd& eps,
                                       std::span<const int> k) {
  std::vector<double> v = moments(p);
  v.push_back(eps[0]);
  v.push_back(eps.squaredNorm());
  double ks = 0.0;
  for (int w : k) ks += w;
  v.push_back(ks);
  return v;
}

inline std::vector<int> windings(const Eigen::VectorXd& x, std::vector<wgmrf::Angle>& angles) {
  std::vector<int> k(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    angles[i] = wgmrf::Angle(x[i]);
    k[i] = static_cast<int>(std::lround((x[i] - angles[i].value()) / wgmrf::kTwoPi));
  }
  return k;
}

inline void apply_steps(wgmrf::WgmrfSampler& s, unsigned steps, wgmrf::Rng& rng) {
  if (steps & kWinding) s.update_winding(rng());
  if (steps & kEps) s.update_spatial_effects(rng);
  if (steps & kMu) s.update_mu(rng);
  if (steps & kSigma2) s.update_sigma2(rng);
  if (steps & kPsi) s.update_psi(rng);
  if (steps & kR) s.update_r(rng);
}

/// Marginal-conditional draws of the joint against a successive-conditional
/// chain alternating the selected updates with fresh data given the state.
inline Comparison run_wgmrf(int cycles, std::uint64_t seed, unsigned steps = kAll) {
  WgmrfFixture f;
  wgmrf::Rng rng(seed);
  const int n = static_cast<int>(f.data.angles.size());
  std::vector<wgmrf::Angle> angles(n, wgmrf::Angle(0.0));

  Draws marginal;
  marginal.reserve(cycles);
  for (int t = 0; t < cycles; ++t) {
    const wgmrf::WgmrfParams p = f.draw_prior(rng);
    const wgmrf::Simulation sim = wgmrf::simulate(f.fem, f.data.A, p, rng);
    marginal.push_back(state_stats(p, sim.eps, windings(sim.x, angles)));
  }

  wgmrf::WgmrfParams theta = f.draw_prior(rng);
  wgmrf::Simulation sim = wgmrf::simulate(f.fem, f.data.A, theta, rng);
  wgmrf::WgmrfSampler sampler(f.data, f.fem, f.config);
  Eigen::VectorXd eps = sim.eps;
  Eigen::VectorXd x = sim.x;
  Draws chain;
  chain.reserve(cycles);
  for (int t = 0; t < cycles; ++t) {
    const std::vector<int> k = windings(x, angles);
    sampler.set_angles(angles);
    sampler.set_state(theta, eps, k);
    apply_steps(sampler, steps, rng);
    theta = sampler.params();
    eps = sampler.eps();
    chain.push_back(state_stats(theta, eps, sampler.winding()));
    // Fresh data given the updated state.
    const double nug = std::sqrt((1.0 - theta.r) * theta.sigma2);
    x = f.data.A.apply(eps).array() + theta.mu;
    for (int i = 0; i < n; ++i) x[i] += nug * wgmrf::sample_normal(rng);
  }
  return compare(marginal, chain);
}

/// One application of the selected updates to independent draws of the
/// joint; the updated state must keep the joint distribution.
inline Comparison run_wgmrf_single_step(int cycles, std::uint64_t seed, unsigned steps) {
  WgmrfFixture f;
  wgmrf::Rng rng(seed);
  const int n = static_cast<int>(f.data.angles.size());
  std::vector<wgmrf::Angle> angles(n, wgmrf::Angle(0.0));
  wgmrf::WgmrfSampler sampler(f.data, f.fem, f.config);
  Draws before;
  Draws after;
  for (int t = 0; t < cycles; ++t) {
    const wgmrf::WgmrfParams p = f.draw_prior(rng);
    const wgmrf::Simulation sim = wgmrf::simulate(f.fem, f.data.A, p, rng);
    const std::vector<int> k = windings(sim.x, angles);
    before.push_back(state_stats(p, sim.eps, k));
    const wgmrf::WgmrfParams q = f.draw_prior(rng);
    const wgmrf::Simulation sim2 = wgmrf::simulate(f.fem, f.data.A, q, rng);
    const std::vector<int> k2 = windings(sim2.x, angles);
    sampler.set_angles(angles);
    sampler.set_state(q, sim2.eps, k2);
    apply_steps(sampler, steps, rng);
    after.push_back(state_stats(sampler.params(), sampler.eps(), sampler.winding()));
  }
  return compare(before, after);
}

// ---------------------------------------------------------------------------
// Low-rank model

inline std::vector<double> lowrank_stats(const wgmrf::LowRankParams& p, const Eigen::VectorXd& w,
                                         std::span<const int> k) {
  std::vector<double> v{p.mu, p.sigma2, p.tau2, p.phi, p.mu * p.mu, p.sigma2 * p.sigma2, p.tau2 * p.tau2, p.phi * p.phi};
  v.push_back(w[0]);
  v.push_back(w.squaredNorm());
  double ks = 0.0;
  for (int x : k) ks += x;
  v.push_back(ks);
  return v;
}

/// N = 20 sites, three fixed knots, informative priors.
struct LowRankFixture {
  std::vector<wgmrf::Location> locations;
  std::vector<wgmrf::Location> knots{wgmrf::Location::planar(0.2, 0.2), wgmrf::Location::planar(0.8, 0.3),
                                     wgmrf::Location::planar(0.5, 0.8)};
  std::vector<wgmrf::Angle> angles;
  wgmrf::LowRankConfig config;

  explicit LowRankFixture(int n_sites = 20, std::uint64_t seed = 7) {
    wgmrf::Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n_sites; ++i) locations.push_back(wgmrf::Location::planar(u(rng), u(rng)));
    angles.assign(n_sites, wgmrf::Angle(0.0));
    config.knots = 3;
    config.delta = 5.0;
    config.mu_prior_scale = 0.5;
    config.sigma_shape = 10.0;
    config.sigma_rate = 2.0;
    config.tau_shape = 10.0;
    config.tau_rate = 2.0;
    config.iterations = 2;
    config.burn_in = 1;
    config.unwrap_init = false;
    config.init = wgmrf::LowRankParams{0.0, 0.2, 0.2, 0.5};
  }

  wgmrf::LowRankParams draw_prior(wgmrf::Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    wgmrf::LowRankParams p;
    p.mu = config.mu_prior_scale * wgmrf::sample_normal(rng);
    p.sigma2 = wgmrf::sample_inverse_gamma(config.sigma_shape, config.sigma_rate, rng);
    p.tau2 = wgmrf::sample_inverse_gamma(config.tau_shape, config.tau_rate, rng);
    do p.phi = config.phi_upper() * u(rng); while (!(p.phi > 0.0));
    return p;
  }

  /// W and X given the parameters.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> simulate(const wgmrf::LowRankParams& p, wgmrf::Rng& rng) const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(knots.size()));
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = std::sqrt(p.sigma2) * wgmrf::sample_normal(rng);
    return {w, simulate_x(p, w, rng)};
  }
  Eigen::VectorXd simulate_x(const wgmrf::LowRankParams& p, const Eigen::VectorXd& w, wgmrf::Rng& rng) const {
    Eigen::VectorXd x = (wgmrf::lowrank_basis(locations, knots, p.phi) * w).array() + p.mu;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += std::sqrt(p.tau2) * wgmrf::sample_normal(rng);
    return x;
  }
};

enum LowRankStep : unsigned { kLrWinding = 1, kLrW = 2, kLrMu = 4, kLrSigma2 = 8, kLrTau2 = 16, kLrPhi = 32, kLrAll = 63 };

inline void apply_lowrank_steps(wgmrf::LowRankSampler& s, unsigned steps, wgmrf::Rng& rng) {
  if (steps & kLrWinding) s.update_winding(rng());
  if (steps & kLrW) s.update_w(rng);
  if (steps & kLrMu) s.update_mu(rng);
  if (steps & kLrSigma2) s.update_sigma2(rng);
  if (steps & kLrTau2) s.update_tau2(rng);
  if (steps & kLrPhi) s.update_phi(rng);
}

inline Comparison run_lowrank(int cycles, std::uint64_t seed, unsigned steps = kLrAll) {
  LowRankFixture f;
  wgmrf::Rng rng(seed);
  const int n = static_cast<int>(f.locations.size());
  std::vector<wgmrf::Angle> angles(n, wgmrf::Angle(0.0));

  Draws marginal;
  marginal.reserve(cycles);
  for (int t = 0; t < cycles; ++t) {
    const wgmrf::LowRankParams p = f.draw_prior(rng);
    const auto [w, x] = f.simulate(p, rng);
    marginal.push_back(lowrank_stats(p, w, windings(x, angles)));
  }

  wgmrf::LowRankParams theta = f.draw_prior(rng);
  auto [w, x] = f.simulate(theta, rng);
  wgmrf::LowRankSampler sampler(f.angles, f.locations, f.knots, f.config);
  Draws chain;
  chain.reserve(cycles);
  for (int t = 0; t < cycles; ++t) {
    const std::vector<int> k = windings(x, angles);
    sampler.set_angles(angles);
    sampler.set_state(theta, w, k);
    apply_lowrank_steps(sampler, steps, rng);
    theta = sampler.params();
    w = sampler.w();
    chain.push_back(lowrank_stats(theta, w, sampler.winding()));
    x = f.simulate_x(theta, w, rng);
  }
  return compare(marginal, chain);
}

inline Comparison run_lowrank_single_step(int cycles, std::uint64_t seed, unsigned steps) {
  LowRankFixture f;
  wgmrf::Rng rng(seed);
  const int n = static_cast<int>(f.locations.size());
  std::vector<wgmrf::Angle> angles(n, wgmrf::Angle(0.0));
  wgmrf::LowRankSampler sampler(f.angles, f.locations, f.knots, f.config);
  Draws before;
  Draws after;
  for (int t = 0; t < cycles; ++t) {
    const wgmrf::LowRankParams p = f.draw_prior(rng);
    const auto [w, x] = f.simulate(p, rng);
    before.push_back(lowrank_stats(p, w, windings(x, angles)));
    const wgmrf::LowRankParams q = f.draw_prior(rng);
    const auto [w2, x2] = f.simulate(q, rng);
    const std::vector<int> k2 = windings(x2, angles);
    sampler.set_angles(angles);
    sampler.set_state(q, w2, k2);
    apply_lowrank_steps(sampler, steps, rng);
    after.push_back(lowrank_stats(sampler.params(), sampler.w(), sampler.winding()));
  }
  return compare(before, after);
}

}  // namespace geweke

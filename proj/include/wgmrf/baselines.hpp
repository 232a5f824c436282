#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "wgmrf/circular.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/random.hpp"

namespace wgmrf {

// ---------------------------------------------------------------------------
// IID wrapped normal

struct IidConfig {
  int k_bound = 3;
  double mu_prior_scale = 100.0;
  double ig_shape = 0.1;
  double ig_rate = 0.1;
  int iterations = 20000;
  int burn_in = 10000;
  int thin = 5;
  std::uint64_t seed = 1;

  void validate() const;
  int retained_draws() const { return (iterations - burn_in) / thin; }
};

struct IidDraw {
  int iter = 0;
  double mu = 0.0;
  double sigma2 = 0.0;
};

struct IidWnSamples {
  std::vector<IidDraw> draws;
  IidConfig config;

  int size() const { return static_cast<int>(draws.size()); }
};

/// Gibbs sampler for Y_i ~ WN(mu, sigma2) with mu | sigma2 ~ N(0, s^2 sigma2)
/// and sigma2 ~ IG(a, b).
IidWnSamples fit_iid_wn(std::span<const Angle> angles, const IidConfig& config);

void save_iid(const IidWnSamples& samples, const std::filesystem::path& dir);
IidWnSamples load_iid(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Low-rank wrapped Gaussian process

/// Coordinates used by the kernel: (x, y, 0) in planar mode, the point on the
/// sphere of radius 180/pi in spherical mode (chordal distances in degrees).
Eigen::Vector3d kernel_coordinates(const Location& loc);

/// k-means centres (k-means++ seeding, Lloyd iterations, best of `restarts`).
std::vector<Location> select_knots(std::span<const Location> locations, int m, Rng& rng, int restarts = 5,
                                   int max_iterations = 100);

/// B[i][j] = (2 pi phi^2)^{-1/2} exp(-0.5 |s_i - knot_j|^2 / phi^2).
Eigen::MatrixXd lowrank_basis(std::span<const Location> locations, std::span<const Location> knots, double phi);

struct LowRankParams {
  double mu = 0.0;
  double sigma2 = 1.0;
  double tau2 = 1.0;
  double phi = 1.0;
};

struct LowRankConfig {
  int knots = 100;
  int k_bound = 3;
  double mu_prior_scale = 100.0;
  double sigma_shape = 0.1;
  double sigma_rate = 0.1;
  double tau_shape = 0.1;
  double tau_rate = 0.1;
  /// Domain diameter; phi ~ U(0, phi_fraction * delta).
  double delta = 0.0;
  double phi_fraction = 0.2;

  int iterations = 20000;
  int burn_in = 10000;
  int thin = 5;
  double step_phi = 0.5;
  double accept_low = 0.3;
  double accept_high = 0.5;
  int adapt_interval = 100;
  int kmeans_restarts = 5;

  std::uint64_t seed = 1;
  std::optional<LowRankParams> init;
  bool fix_phi = false;
  bool keep_w = true;
  /// Start K from a spatial unwrapping of the data rather than zero.
  bool unwrap_init = true;

  double phi_upper() const { return phi_fraction * delta; }
  void validate() const;
  int retained_draws() const { return (iterations - burn_in) / thin; }
};

struct LowRankDraw {
  int iter = 0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double tau2 = 0.0;
  double phi = 0.0;
};

struct LowRankSamples {
  std::vector<LowRankDraw> draws;
  /// One thinned W vector per draw, as columns.
  Eigen::MatrixXd w;
  std::vector<Location> knots;
  double accept_phi = 0.0;
  double final_step_phi = 0.0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(draws.size()); }
};

void save_lowrank(const LowRankSamples& samples, const std::filesystem::path& dir);
LowRankSamples load_lowrank(const std::filesystem::path& dir);

class LowRankSampler {
 public:
  LowRankSampler(std::span<const Angle> angles, std::span<const Location> locations, std::vector<Location> knots,
                 const LowRankConfig& config);

  const LowRankParams& params() const noexcept { return params_; }
  const Eigen::VectorXd& w() const noexcept { return w_; }
  const std::vector<int>& winding() const noexcept { return k_; }
  const Eigen::VectorXd& x() const noexcept { return x_; }
  const Eigen::MatrixXd& basis() const noexcept { return b_; }
  const std::vector<Location>& knots() const noexcept { return knots_; }
  double step_phi() const noexcept { return adapt_phi_.step; }
  const AdaptiveStep& phi_stats() const noexcept { return adapt_phi_; }

  void set_state(const LowRankParams& params, const Eigen::VectorXd& w, std::span<const int> k);
  void set_angles(std::span<const Angle> angles);

  void update_winding(std::uint64_t key);
  void update_w(Rng& rng);
  void update_mu(Rng& rng);
  void update_sigma2(Rng& rng);
  void update_tau2(Rng& rng);
  bool update_phi(Rng& rng);
  void sweep(Rng& rng);
  void adapt();

  /// log R of the phi move, including the Jacobian.
  double log_phi_ratio(double phi_candidate, const Eigen::MatrixXd& b_candidate) const;
  double residual_sq() const;

 private:
  void set_phi(double phi, Eigen::MatrixXd b);

  std::vector<Location> locations_;
  std::vector<Location> knots_;
  LowRankConfig config_;
  int n_ = 0;
  int m_ = 0;

  LowRankParams params_;
  std::vector<int> k_;
  Eigen::VectorXd y_;
  Eigen::VectorXd x_;
  Eigen::VectorXd w_;
  Eigen::VectorXd bw_;
  Eigen::MatrixXd b_;
  Eigen::MatrixXd btb_;
  AdaptiveStep adapt_phi_;
};

using LowRankProgressFn = std::function<void(int iter, const LowRankParams&)>;

/// Selects knots with a generator seeded from config.seed, then runs the
/// sampler.
LowRankSamples fit_lowrank(std::span<const Angle> angles, std::span<const Location> locations,
                           const LowRankConfig& config, const LowRankProgressFn& progress = {});

}  // namespace wgmrf

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wgmrf/circular.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/random.hpp"
#include "wgmrf/sparse.hpp"

namespace wgmrf {

struct WgmrfParams {
  double mu = 0.0;
  double sigma2 = 1.0;
  double psi = 1.0;
  double r = 0.5;

  /// Throws InvalidArgument unless sigma2 > 0, 0 < psi < delta, 0 < r < 1.
  void validate(double delta) const;
};

enum class WindingInit { zero, unwrap };

struct WgmrfConfig {
  int k_bound = 3;
  /// Starting winding numbers: all zero, or a spatial phase unwrapping of
  /// the data (needs site locations).
  WindingInit winding_init = WindingInit::unwrap;
  double mu_prior_scale = 100.0;
  double ig_shape = 0.1;
  double ig_rate = 0.1;
  /// Upper bound of the uniform prior on psi (domain diameter).
  double delta = 0.0;

  int iterations = 20000;
  int burn_in = 10000;
  int thin = 5;

  double step_psi = 0.5;
  double step_r = 0.5;
  double accept_low = 0.3;
  double accept_high = 0.5;
  int adapt_interval = 100;

  std::uint64_t seed = 1;
  /// Start far from the moment-based defaults.
  bool stress_init = false;
  /// Overrides the data-driven initial parameters.
  std::optional<WgmrfParams> init;
  /// Hold psi or r at their initial value.
  bool fix_psi = false;
  bool fix_r = false;
  bool keep_eps = true;

  void validate() const;
  int retained_draws() const { return (iterations - burn_in) / thin; }
};

struct WgmrfData {
  std::vector<Angle> angles;
  ProjectionMatrix A;
  /// Site locations; only used to initialize the winding numbers.
  std::vector<Location> locations;
};

/// Winding numbers making the unwrapped field X = Y + 2 pi K continuous along
/// a minimum spanning tree of nearest-neighbour edges weighted by the wrapped
/// angle difference, shifted so that mean(X) is closest to `centre` and
/// clamped to [-m, m].
std::vector<int> unwrap_winding(std::span<const Angle> angles, std::span<const Location> locations,
                                double centre, int m);

struct Draw {
  int iter = 0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double psi = 0.0;
  double r = 0.0;
};

struct TraceRow {
  int iter = 0;
  WgmrfParams params;
  double step_psi = 0.0;
  double step_r = 0.0;
};

struct PosteriorSamples {
  std::vector<Draw> draws;
  /// One thinned eps* vector per draw, as columns.
  Eigen::MatrixXd eps;
  std::vector<TraceRow> trace;
  double accept_psi = 0.0;
  double accept_r = 0.0;
  double final_step_psi = 0.0;
  double final_step_r = 0.0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(draws.size()); }
};

void save_posterior(const PosteriorSamples& samples, const std::filesystem::path& dir);
PosteriorSamples load_posterior(const std::filesystem::path& dir);

struct Simulation {
  std::vector<Angle> angles;
  Eigen::VectorXd x;
  Eigen::VectorXd eps;
};

/// Draws eps* ~ N(0, r sigma2 Q^{-1}), X = mu + A eps* + nugget, Y = X mod 2pi.
Simulation simulate(const Mesh& mesh, const FemTriple& fem, const WgmrfParams& params,
                    std::span<const Location> locations, Rng& rng);
/// Same, with a precomputed projection.
Simulation simulate(const FemTriple& fem, const ProjectionMatrix& a, const WgmrfParams& params, Rng& rng);

/// Metropolis-within-Gibbs sampler holding the latent state and the cached
/// factorizations. The FEM pattern carries both Q_psi and the eps* posterior
/// precision, so one symbolic analysis serves every factorization.
class WgmrfSampler {
 public:
  WgmrfSampler(const WgmrfData& data, const FemTriple& fem, const WgmrfConfig& config);

  const WgmrfParams& params() const noexcept { return params_; }
  const Eigen::VectorXd& eps() const noexcept { return eps_; }
  const std::vector<int>& winding() const noexcept { return k_; }
  const Eigen::VectorXd& x() const noexcept { return x_; }
  double step_psi() const noexcept { return adapt_psi_.step; }
  double step_r() const noexcept { return adapt_r_.step; }
  const AdaptiveStep& psi_stats() const noexcept { return adapt_psi_; }
  const AdaptiveStep& r_stats() const noexcept { return adapt_r_; }

  /// Replaces the state; winding numbers are taken from x.
  void set_state(const WgmrfParams& params, const Eigen::VectorXd& eps, std::span<const int> k);
  /// Replaces the observed angles (same sites), recomputing X from K.
  void set_angles(std::span<const Angle> angles);

  void update_winding(std::uint64_t key);
  void update_spatial_effects(Rng& rng);
  void update_mu(Rng& rng);
  void update_sigma2(Rng& rng);
  bool update_psi(Rng& rng);
  bool update_r(Rng& rng);
  /// One full sweep in the fixed order.
  void sweep(Rng& rng);

  /// log R of the psi move (density and Jacobian terms), exposed for tests.
  double log_psi_ratio(double psi_candidate);
  double log_r_ratio(double r_candidate) const;

  /// Squared residual norm ||X - mu 1 - A eps*||^2.
  double residual_sq() const;
  double eps_quad() const;
  double log_det_q() const noexcept { return log_det_q_; }

  void adapt();

 private:
  void refresh_q();
  void fill_posterior_precision();

  const WgmrfData& data_;
  const FemTriple& fem_;
  WgmrfConfig config_;
  int n_ = 0;
  int n_star_ = 0;

  WgmrfParams params_;
  std::vector<int> k_;
  Eigen::VectorXd y_;
  Eigen::VectorXd x_;
  Eigen::VectorXd eps_;

  SparseSymmetric q_;
  SparseSymmetric q_candidate_;
  SparseSymmetric post_;
  std::vector<double> gram_;
  CholeskyFactor q_factor_;
  CholeskyFactor post_factor_;
  double log_det_q_ = 0.0;
  double eps_quad_ = 0.0;

  AdaptiveStep adapt_psi_;
  AdaptiveStep adapt_r_;
};

/// Data-driven starting values (moment estimates, psi = delta / 10, r = 0.5).
WgmrfParams initial_params(std::span<const Angle> angles, const WgmrfConfig& config);

using ProgressFn = std::function<void(int iter, const WgmrfParams&)>;

PosteriorSamples fit_wgmrf(const WgmrfData& data, const FemTriple& fem, const WgmrfConfig& config,
                           const ProgressFn& progress = {});

}  // namespace wgmrf

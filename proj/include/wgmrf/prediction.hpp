#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wgmrf/baselines.hpp"
#include "wgmrf/circular.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/wgmrf_model.hpp"

namespace wgmrf {

struct CircularPrediction {
  Location location;
  Angle mean_direction;
  /// |E exp(iY)| in [0, 1].
  double concentration = 0.0;
  /// False when the Monte Carlo moment vanishes (antipodal cancellation);
  /// mean_direction is then 0 and carries no information.
  bool direction_defined = true;
};

/// Builds the summary from the averaged cosine and sine moments.
CircularPrediction summarize_moment(const Location& location, double g_c, double g_s);

/// Circular kriging from thinned eps* draws: average over draws of
/// exp(-(1 - r) sigma2 / 2) exp(i (mu + a0' eps*)).
std::vector<CircularPrediction> predict_wgmrf(const PosteriorSamples& samples, const Mesh& mesh,
                                              std::span<const Location> locations);
/// Same with b_phi(s0)' W and the nugget tau2.
std::vector<CircularPrediction> predict_lowrank(const LowRankSamples& samples, std::span<const Location> locations);
/// Location-free prediction from exp(-sigma2 / 2) exp(i mu).
CircularPrediction predict_iid(const IidWnSamples& samples);
std::vector<CircularPrediction> predict_iid(const IidWnSamples& samples, std::span<const Location> locations);
/// Composition variant: one draw Y ~ WN(mu_b, sigma2_b) per site and per
/// posterior draw, averaged as exp(iY). Sites get independent streams
/// derived from `seed`, so the predicted directions vary across sites.
std::vector<CircularPrediction> predict_iid_sampled(const IidWnSamples& samples,
                                                    std::span<const Location> locations, std::uint64_t seed);

/// sinh(sigma2 rho) / sinh(sigma2).
double circular_correlation_pair(double sigma2, double rho_linear);

struct CorrelationPoint {
  int i = 0;
  int j = 0;
  /// Geodesic km (spherical) or Euclidean units (planar).
  double distance = 0.0;
  double rho_c_mean = 0.0;
  double rho_c_sd = 0.0;
  /// Posterior mean of the linear marginal variances r a_i' Q^{-1} a_i + 1 - r
  /// and the same at j.
  double var_i = 0.0;
  double var_j = 0.0;
};

struct CorrelationOptions {
  /// Use at most this many draws, evenly spaced; 0 keeps all.
  int max_draws = 0;
  bool include_diagonal = false;
  /// Divide by the per-draw marginal variances so that rho is a correlation.
  bool normalize = false;
};

/// Posterior mean and sd of the induced circular correlation between probe
/// pairs, from r a_i' Q_psi^{-1} a_j + (1 - r) 1[i = j] per draw. Values are
/// not clamped; mesh boundary effects can push the unnormalized rho above 1.
std::vector<CorrelationPoint> circular_correlation_curve(const PosteriorSamples& samples, const FemTriple& fem,
                                                         const Mesh& mesh, std::span<const Location> probes,
                                                         const CorrelationOptions& options = {});

struct EffectiveRange {
  bool determined = false;
  double distance = 0.0;
  /// (bin centre, isotonic decreasing fit) per non-empty bin.
  std::vector<std::pair<double, double>> smoothed;
};

/// Bins the curve by distance, fits a decreasing step function by pool
/// adjacent violators and interpolates the first crossing of the threshold.
EffectiveRange effective_circular_range(std::span<const CorrelationPoint> curve, int n_bins = 30,
                                        double threshold = 0.05);

/// Weighted isotonic (non-increasing) regression.
std::vector<double> isotonic_decreasing(std::span<const double> values, std::span<const double> weights);

}  // namespace wgmrf

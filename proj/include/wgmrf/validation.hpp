#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wgmrf/circular.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/prediction.hpp"

namespace wgmrf {

/// Shortest signed angular distance pred - obs in (-pi, pi]; antipodal pairs
/// map to +pi.
double circular_difference(Angle pred, Angle obs);

struct MetricsReport {
  std::size_t n = 0;
  double sc_rmse = 0.0;
  double crmse = 0.0;
  double cmae = 0.0;
  double resultant_length = 0.0;
  /// Jammalamadaka-Sarma correlation; empty when a sine-deviation sum or a
  /// circular mean is degenerate.
  std::optional<double> circular_correlation;
  double avg_concentration = 0.0;
};

MetricsReport metrics_suite(std::span<const Angle> predicted, std::span<const double> concentration,
                            std::span<const Angle> observed);
MetricsReport metrics_suite(std::span<const CircularPrediction> predicted, std::span<const Angle> observed);

struct FoldAssignment {
  /// Fold label in 1..n_folds per location.
  std::vector<int> fold;
  /// Row-major block index per location.
  std::vector<int> block;
  int block_rows = 1;
  int block_cols = 1;
  int n_folds = 2;
  BoundingBox box;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  std::vector<int> test_indices(int f) const;
  std::vector<int> train_indices(int f) const;
  std::vector<int> fold_sizes() const;
};

/// Splits the bounding box into block_rows x block_cols rectangles in
/// coordinate space (lon/lat in spherical mode) and deals the non-empty
/// blocks round-robin to folds after a seeded shuffle.
FoldAssignment spatial_block_folds(std::span<const Location> locations, int block_rows, int block_cols, int n_folds,
                                   std::uint64_t seed);

struct VariogramBin {
  double center = 0.0;
  double gamma_sin = 0.0;
  double gamma_cos = 0.0;
  std::size_t pairs = 0;
};

struct VariogramOptions {
  /// Pairs beyond this count are replaced by a seeded sample of this size.
  std::size_t max_pairs = 2'000'000;
  std::uint64_t seed = 0;
};

/// Matheron estimator of sin(Y) and cos(Y) over equal-width distance bins on
/// [0, max_dist]. Empty bins carry NaN semivariances.
std::vector<VariogramBin> empirical_semivariogram_sincos(std::span<const Angle> angles,
                                                         std::span<const Location> locations, int n_bins,
                                                         double max_dist, const VariogramOptions& options = {});

struct HistogramBin {
  double start = 0.0;
  double end = 0.0;
  std::size_t count = 0;
};

std::vector<HistogramBin> circular_histogram(std::span<const Angle> angles, int n_bins);

}  // namespace wgmrf

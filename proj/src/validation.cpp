#include "wgmrf/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wgmrf/errors.hpp"
#include "wgmrf/random.hpp"

namespace wgmrf {

namespace {

constexpr double kDegenerate = 1e-12;
// Fixed chunking keeps floating-point sums independent of the thread count.
constexpr int kChunks = 64;

struct BinSums {
  std::vector<double> sin2;
  std::vector<double> cos2;
  std::vector<std::size_t> count;

  explicit BinSums(int n) : sin2(n, 0.0), cos2(n, 0.0), count(n, 0) {}
};

}  // namespace

double circular_difference(Angle pred, Angle obs) {
  double d = pred.value() - obs.value();
  if (d > kPi) d -= kTwoPi;
  else if (d <= -kPi) d += kTwoPi;
  if (std::abs(std::abs(d) - kPi) < 1e-12) return kPi;
  return d;
}

MetricsReport metrics_suite(std::span<const Angle> predicted, std::span<const double> concentration,
                            std::span<const Angle> observed) {
  const std::size_t n = observed.size();
  if (n == 0) throw InvalidArgument("metrics need at least one pair");
  if (predicted.size() != n || concentration.size() != n)
    throw InvalidArgument("predicted, concentration and observed lengths differ");
  MetricsReport r;
  r.n = n;
  double sc = 0.0, d2 = 0.0, dabs = 0.0, ec = 0.0, es = 0.0, cbar = 0.0;
  double sy = 0.0, cy = 0.0, sp = 0.0, cp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = observed[i].value();
    const double p = predicted[i].value();
    const double c = concentration[i];
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("concentration outside [0, 1] at row " + std::to_string(i));
    const double dc = std::cos(y) - std::cos(p);
    const double ds = std::sin(y) - std::sin(p);
    sc += dc * dc + ds * ds;
    const double d = circular_difference(predicted[i], observed[i]);
    d2 += d * d;
    dabs += std::abs(d);
    ec += std::cos(d);
    es += std::sin(d);
    cbar += c;
    sy += std::sin(y);
    cy += std::cos(y);
    sp += std::sin(p);
    cp += std::cos(p);
  }
  const double dn = static_cast<double>(n);
  r.sc_rmse = std::sqrt(sc / dn);
  r.crmse = std::sqrt(d2 / dn);
  r.cmae = dabs / dn;
  r.resultant_length = std::min(1.0, std::hypot(ec, es) / dn);
  r.avg_concentration = cbar / dn;

  if (std::hypot(sy, cy) / dn > kDegenerate && std::hypot(sp, cp) / dn > kDegenerate) {
    const double ybar = std::atan2(sy, cy);
    const double pbar = std::atan2(sp, cp);
    double num = 0.0, vy = 0.0, vp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::sin(observed[i].value() - ybar);
      const double b = std::sin(predicted[i].value() - pbar);
      num += a * b;
      vy += a * a;
      vp += b * b;
    }
    if (vy / dn > kDegenerate && vp / dn > kDegenerate)
      r.circular_correlation = std::clamp(num / std::sqrt(vy * vp), -1.0, 1.0);
  }
  return r;
}

MetricsReport metrics_suite(std::span<const CircularPrediction> predicted, std::span<const Angle> observed) {
  std::vector<Angle> p;
  std::vector<double> c;
  p.reserve(predicted.size());
  c.reserve(predicted.size());
  for (const auto& x : predicted) {
    p.push_back(x.mean_direction);
    c.push_back(x.concentration);
  }
  return metrics_suite(p, c, observed);
}

std::vector<int> FoldAssignment::test_indices(int f) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == f) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> FoldAssignment::train_indices(int f) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != f) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> FoldAssignment::fold_sizes() const {
  std::vector<int> out(n_folds, 0);
  for (int f : fold) ++out[f - 1];
  return out;
}

FoldAssignment spatial_block_folds(std::span<const Location> locations, int block_rows, int block_cols, int n_folds,
                                   std::uint64_t seed) {
  if (n_folds < 2) throw InvalidArgument("n_folds must be >= 2");
  if (block_rows < 1 || block_cols < 1) throw InvalidArgument("block grid dimensions must be >= 1");
  FoldAssignment out;
  out.block_rows = block_rows;
  out.block_cols = block_cols;
  out.n_folds = n_folds;
  out.seed = seed;
  out.box = bounding_box(locations);

  const auto cell = [](double v, double lo, double hi, int k) {
    if (!(hi > lo)) return 0;
    return std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * k)), 0, k - 1);
  };
  const int n = static_cast<int>(locations.size());
  out.block.resize(n);
  std::vector<char> used(static_cast<std::size_t>(block_rows) * block_cols, 0);
  for (int i = 0; i < n; ++i) {
    const int c = cell(locations[i].x, out.box.xmin, out.box.xmax, block_cols);
    const int r = cell(locations[i].y, out.box.ymin, out.box.ymax, block_rows);
    out.block[i] = r * block_cols + c;
    used[out.block[i]] = 1;
  }
  std::vector<int> blocks;
  for (std::size_t b = 0; b < used.size(); ++b)
    if (used[b]) blocks.push_back(static_cast<int>(b));
  Rng rng(seed);
  std::shuffle(blocks.begin(), blocks.end(), rng);
  std::vector<int> fold_of(used.size(), 0);
  for (std::size_t k = 0; k < blocks.size(); ++k) fold_of[blocks[k]] = static_cast<int>(k % n_folds) + 1;
  out.fold.resize(n);
  for (int i = 0; i < n; ++i) out.fold[i] = fold_of[out.block[i]];

  const std::vector<int> sizes = out.fold_sizes();
  for (int f = 0; f < n_folds; ++f)
    if (sizes[f] == 0)
      out.warnings.push_back("fold " + std::to_string(f + 1) + " received no locations (" +
                             std::to_string(blocks.size()) + " non-empty blocks for " + std::to_string(n_folds) +
                             " folds)");
  return out;
}

std::vector<VariogramBin> empirical_semivariogram_sincos(std::span<const Angle> angles,
                                                         std::span<const Location> locations, int n_bins,
                                                         double max_dist, const VariogramOptions& options) {
  if (n_bins < 1) throw InvalidArgument("n_bins must be >= 1");
  if (!(max_dist > 0.0)) throw InvalidArgument("max_dist must be positive");
  if (angles.size() != locations.size()) throw InvalidArgument("angles and locations lengths differ");
  const std::size_t n = angles.size();
  std::vector<double> s(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = std::sin(angles[i].value());
    c[i] = std::cos(angles[i].value());
  }
  const double width = max_dist / n_bins;
  const std::size_t total = n < 2 ? 0 : n * (n - 1) / 2;
  const bool sampled = total > options.max_pairs;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  if (sampled) {
    Rng rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    pairs.reserve(options.max_pairs);
    while (pairs.size() < options.max_pairs) {
      const std::size_t i = pick(rng);
      const std::size_t j = pick(rng);
      if (i != j) pairs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }

  std::vector<BinSums> chunk(kChunks, BinSums(n_bins));
  const auto add = [&](BinSums& acc, std::size_t i, std::size_t j) {
    const double d = geodesic_distance(locations[i], locations[j]);
    if (d > max_dist) return;
    const int k = std::min(n_bins - 1, static_cast<int>(d / width));
    const double a = s[i] - s[j];
    const double b = c[i] - c[j];
    acc.sin2[k] += a * a;
    acc.cos2[k] += b * b;
    ++acc.count[k];
  };
#pragma omp parallel for schedule(dynamic)
  for (int ch = 0; ch < kChunks; ++ch) {
    BinSums& acc = chunk[ch];
    if (sampled) {
      const std::size_t lo = pairs.size() * ch / kChunks;
      const std::size_t hi = pairs.size() * (ch + 1) / kChunks;
      for (std::size_t p = lo; p < hi; ++p) add(acc, pairs[p].first, pairs[p].second);
    } else {
      // Interleaved rows balance the triangular workload.
      for (std::size_t i = ch; i < n; i += kChunks)
        for (std::size_t j = i + 1; j < n; ++j) add(acc, i, j);
    }
  }

  std::vector<VariogramBin> out(n_bins);
  std::size_t found = 0;
  for (int k = 0; k < n_bins; ++k) {
    double ss = 0.0, cc = 0.0;
    std::size_t m = 0;
    for (const BinSums& acc : chunk) {
      ss += acc.sin2[k];
      cc += acc.cos2[k];
      m += acc.count[k];
    }
    out[k].center = (k + 0.5) * width;
    out[k].pairs = m;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out[k].gamma_sin = m > 0 ? ss / (2.0 * m) : nan;
    out[k].gamma_cos = m > 0 ? cc / (2.0 * m) : nan;
    found += m;
  }
  if (found == 0) throw InvalidArgument("no location pairs within max_dist");
  return out;
}

std::vector<HistogramBin> circular_histogram(std::span<const Angle> angles, int n_bins) {
  if (n_bins < 2) throw InvalidArgument("n_bins must be >= 2");
  const double width = kTwoPi / n_bins;
  std::vector<HistogramBin> out(n_bins);
  for (int k = 0; k < n_bins; ++k) {
    out[k].start = k * width;
    out[k].end = k + 1 == n_bins ? kTwoPi : (k + 1) * width;
  }
  for (const Angle& a : angles) {
    const int k = std::min(n_bins - 1, static_cast<int>(a.value() / width));
    ++out[k].count;
  }
  return out;
}

}  // namespace wgmrf

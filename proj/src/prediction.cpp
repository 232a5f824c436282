#include "wgmrf/prediction.hpp"

#include <algorithm>
#include <cmath>

#include "wgmrf/errors.hpp"
#include "wgmrf/sparse.hpp"

namespace wgmrf {

namespace {

constexpr double kVanishingMoment = 1e-14;

}  // namespace

CircularPrediction summarize_moment(const Location& location, double g_c, double g_s) {
  CircularPrediction p;
  p.location = location;
  p.concentration = std::min(1.0, std::hypot(g_c, g_s));
  if (p.concentration <= kVanishingMoment) {
    p.direction_defined = false;
    p.mean_direction = Angle(0.0);
  } else {
    p.mean_direction = atan2_star(g_s, g_c);
  }
  return p;
}

std::vector<CircularPrediction> predict_wgmrf(const PosteriorSamples& samples, const Mesh& mesh,
                                              std::span<const Location> locations) {
  const int b = samples.size();
  if (b == 0) throw InvalidArgument("no posterior draws");
  if (samples.eps.cols() != b || samples.eps.rows() != mesh.num_nodes())
    throw InvalidArgument("posterior eps* draws are missing or do not match the mesh");
  const ProjectionMatrix a = projection(mesh, locations);
  std::vector<double> factor(b);
  for (int d = 0; d < b; ++d) {
    const Draw& dr = samples.draws[d];
    factor[d] = std::exp(-0.5 * (1.0 - dr.r) * dr.sigma2);
  }
  const int n = static_cast<int>(locations.size());
  std::vector<CircularPrediction> out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto& nodes = a.row_nodes(i);
    const auto& w = a.row_weights(i);
    double gc = 0.0;
    double gs = 0.0;
    for (int d = 0; d < b; ++d) {
      const double theta = samples.draws[d].mu + w[0] * samples.eps(nodes[0], d) + w[1] * samples.eps(nodes[1], d) +
                           w[2] * samples.eps(nodes[2], d);
      gc += factor[d] * std::cos(theta);
      gs += factor[d] * std::sin(theta);
    }
    out[i] = summarize_moment(locations[i], gc / b, gs / b);
  }
  return out;
}

std::vector<CircularPrediction> predict_lowrank(const LowRankSamples& samples, std::span<const Location> locations) {
  const int b = samples.size();
  if (b == 0) throw InvalidArgument("no posterior draws");
  if (samples.w.cols() != b || samples.w.rows() != static_cast<Eigen::Index>(samples.knots.size()))
    throw InvalidArgument("posterior W draws are missing or do not match the knots");
  const int n = static_cast<int>(locations.size());
  Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(n, 1);
  Eigen::MatrixXd gs = Eigen::MatrixXd::Zero(n, 1);
  for (int d = 0; d < b; ++d) {
    const LowRankDraw& dr = samples.draws[d];
    const Eigen::VectorXd theta = (lowrank_basis(locations, samples.knots, dr.phi) * samples.w.col(d)).array() + dr.mu;
    const double f = std::exp(-0.5 * dr.tau2);
    gc.col(0).array() += f * theta.array().cos();
    gs.col(0).array() += f * theta.array().sin();
  }
  std::vector<CircularPrediction> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(summarize_moment(locations[i], gc(i, 0) / b, gs(i, 0) / b));
  return out;
}

CircularPrediction predict_iid(const IidWnSamples& samples) {
  const int b = samples.size();
  if (b == 0) throw InvalidArgument("no posterior draws");
  double gc = 0.0;
  double gs = 0.0;
  for (const IidDraw& d : samples.draws) {
    const double f = std::exp(-0.5 * d.sigma2);
    gc += f * std::cos(d.mu);
    gs += f * std::sin(d.mu);
  }
  return summarize_moment(Location{}, gc / b, gs / b);
}

std::vector<CircularPrediction> predict_iid(const IidWnSamples& samples, std::span<const Location> locations) {
  const CircularPrediction shared = predict_iid(samples);
  std::vector<CircularPrediction> out(locations.size(), shared);
  for (std::size_t i = 0; i < locations.size(); ++i) out[i].location = locations[i];
  return out;
}

std::vector<CircularPrediction> predict_iid_sampled(const IidWnSamples& samples,
                                                    std::span<const Location> locations, std::uint64_t seed) {
  const int b = samples.size();
  if (b == 0) throw InvalidArgument("no posterior draws");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(locations.size());
  std::vector<CircularPrediction> out(locations.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Rng rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i))));
    double gc = 0.0;
    double gs = 0.0;
    for (const IidDraw& d : samples.draws) {
      const double y = d.mu + std::sqrt(d.sigma2) * sample_normal(rng);
      gc += std::cos(y);
      gs += std::sin(y);
    }
    out[i] = summarize_moment(locations[i], gc / b, gs / b);
  }
  return out;
}

double circular_correlation_pair(double sigma2, double rho) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("sigma2 must be positive");
  // sinh(a)/sinh(b) = exp(a - b) (1 - exp(-2a)) / (1 - exp(-2b)) for b > 0.
  if (sigma2 > 20.0) {
    const double a = sigma2 * rho;
    return std::exp(a - sigma2) * (-std::expm1(-2.0 * a)) / (-std::expm1(-2.0 * sigma2));
  }
  return std::sinh(sigma2 * rho) / std::sinh(sigma2);
}

std::vector<CorrelationPoint> circular_correlation_curve(const PosteriorSamples& samples, const FemTriple& fem,
                                                         const Mesh& mesh, std::span<const Location> probes,
                                                         const CorrelationOptions& options) {
  const int b = samples.size();
  if (b == 0) throw InvalidArgument("no posterior draws");
  const int p = static_cast<int>(probes.size());
  if (p < 2) throw InvalidArgument("need at least two probe locations");
  const ProjectionMatrix a = projection(mesh, probes);
  const Eigen::MatrixXd at = Eigen::MatrixXd(a.to_eigen().transpose());

  std::vector<int> use;
  if (options.max_draws > 0 && options.max_draws < b) {
    for (int k = 0; k < options.max_draws; ++k)
      use.push_back(static_cast<int>(std::floor((k + 0.5) * b / static_cast<double>(options.max_draws))));
  } else {
    for (int k = 0; k < b; ++k) use.push_back(k);
  }

  std::vector<CorrelationPoint> pts;
  for (int i = 0; i < p; ++i)
    for (int j = options.include_diagonal ? i : i + 1; j < p; ++j)
      pts.push_back({i, j, geodesic_distance(probes[i], probes[j]), 0.0, 0.0, 0.0, 0.0});

  std::vector<double> sum(pts.size(), 0.0);
  std::vector<double> sum2(pts.size(), 0.0);
  SparseSymmetric q = fem.pattern;
  CholeskyFactor factor;
  bool analysed = false;
  for (int d : use) {
    const Draw& dr = samples.draws[d];
    spde_precision_into(fem, dr.psi, q);
    if (!analysed) {
      factor = factorize(q);
      analysed = true;
    } else {
      factor.refactorize(q);
    }
    Eigen::MatrixXd x(at.rows(), p);
    for (int c = 0; c < p; ++c) x.col(c) = factor.solve(at.col(c));
    const Eigen::MatrixXd cov = at.transpose() * x;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const int i = pts[k].i;
      const int j = pts[k].j;
      const double vi = dr.r * cov(i, i) + 1.0 - dr.r;
      const double vj = dr.r * cov(j, j) + 1.0 - dr.r;
      double rho = dr.r * cov(i, j) + (i == j ? 1.0 - dr.r : 0.0);
      if (options.normalize) rho /= std::sqrt(vi * vj);
      pts[k].var_i += vi;
      pts[k].var_j += vj;
      const double rc = circular_correlation_pair(dr.sigma2, rho);
      sum[k] += rc;
      sum2[k] += rc * rc;
    }
  }
  const double n = static_cast<double>(use.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    pts[k].rho_c_mean = sum[k] / n;
    pts[k].var_i /= n;
    pts[k].var_j /= n;
    const double var = n > 1 ? (sum2[k] - n * pts[k].rho_c_mean * pts[k].rho_c_mean) / (n - 1) : 0.0;
    pts[k].rho_c_sd = std::sqrt(std::max(var, 0.0));
  }
  return pts;
}

std::vector<double> isotonic_decreasing(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw InvalidArgument("isotonic: size mismatch");
  struct Block {
    double value;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    blocks.push_back({values[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value < blocks.back().value) {
      const Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w = prev.weight + top.weight;
      prev.value = (prev.value * prev.weight + top.value * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& bl : blocks) out.insert(out.end(), bl.count, bl.value);
  return out;
}

EffectiveRange effective_circular_range(std::span<const CorrelationPoint> curve, int n_bins, double threshold) {
  if (n_bins < 1) throw InvalidArgument("n_bins must be >= 1");
  EffectiveRange out;
  if (curve.empty()) return out;
  double dmax = 0.0;
  for (const auto& c : curve) dmax = std::max(dmax, c.distance);
  if (!(dmax > 0.0)) return out;
  const double width = dmax / n_bins;
  std::vector<double> s(n_bins, 0.0);
  std::vector<double> w(n_bins, 0.0);
  std::vector<double> dsum(n_bins, 0.0);
  for (const auto& c : curve) {
    const int k = std::min(n_bins - 1, static_cast<int>(c.distance / width));
    s[k] += c.rho_c_mean;
    dsum[k] += c.distance;
    w[k] += 1.0;
  }
  std::vector<double> centre;
  std::vector<double> mean;
  std::vector<double> weight;
  for (int k = 0; k < n_bins; ++k) {
    if (w[k] == 0.0) continue;
    centre.push_back(dsum[k] / w[k]);
    mean.push_back(s[k] / w[k]);
    weight.push_back(w[k]);
  }
  const std::vector<double> fit = isotonic_decreasing(mean, weight);
  for (std::size_t k = 0; k < fit.size(); ++k) out.smoothed.emplace_back(centre[k], fit[k]);
  for (std::size_t k = 0; k < fit.size(); ++k) {
    if (fit[k] > threshold) continue;
    out.determined = true;
    if (k == 0) {
      out.distance = centre[0];
    } else {
      const double t = (fit[k - 1] - threshold) / (fit[k - 1] - fit[k]);
      out.distance = centre[k - 1] + t * (centre[k] - centre[k - 1]);
    }
    break;
  }
  return out;
}

}  // namespace wgmrf

#include "wgmrf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "wgmrf/errors.hpp"
#include "wgmrf/wgmrf_model.hpp"

namespace wgmrf {

namespace {

constexpr char kWMagic[8] = {'W', 'G', 'M', 'R', 'F', 'L', 'R', 'W'};

void validate_schedule(int iterations, int burn_in, int thin) {
  if (iterations < 1) throw InvalidArgument("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw InvalidArgument("burn_in must satisfy 0 <= burn_in < iterations");
  if (thin < 1) throw InvalidArgument("thinning must be >= 1");
}

// Draws N(P^{-1} b, P^{-1}) from a dense Cholesky factor of P.
Eigen::VectorXd sample_dense(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& b, Rng& rng) {
  Eigen::VectorXd z(b.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sample_normal(rng);
  Eigen::VectorXd mean = llt.solve(b);
  mean += llt.matrixU().solve(z);
  return mean;
}

Location from_kernel_coordinates(Mode mode, const Eigen::Vector3d& v) {
  if (mode == Mode::planar) return Location::planar(v.x(), v.y());
  const double norm = v.norm();
  if (!(norm > 0.0)) throw DegenerateError("knot centre at the origin of the sphere");
  const Eigen::Vector3d u = v / norm;
  const double lat = std::asin(std::clamp(u.z(), -1.0, 1.0)) * 180.0 / kPi;
  const double lon = std::atan2(u.y(), u.x()) * 180.0 / kPi;
  return Location::spherical(lon, lat);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// IID wrapped normal

void IidConfig::validate() const {
  if (k_bound < 1 || k_bound > 64) throw InvalidArgument("k_bound must lie in [1, 64]");
  if (!(mu_prior_scale > 0.0)) throw InvalidArgument("mu prior scale must be positive");
  if (!(ig_shape > 0.0) || !(ig_rate > 0.0)) throw InvalidArgument("inverse-gamma hyperparameters must be positive");
  validate_schedule(iterations, burn_in, thin);
}

IidWnSamples fit_iid_wn(std::span<const Angle> angles, const IidConfig& config) {
  config.validate();
  const int n = static_cast<int>(angles.size());
  if (n == 0) throw InvalidArgument("no observations");
  Rng rng(config.seed);

  double mu = 0.0;
  double sigma2 = 1.0;
  try {
    const MomentEstimates m = circular_moment_estimates(angles);
    mu = m.mean_direction.value();
    sigma2 = std::max(m.sigma2, 1e-4);
  } catch (const DegenerateError&) {
    sigma2 = 10.0;
  }
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) y[i] = angles[i].value();
  const double s0sq = config.mu_prior_scale * config.mu_prior_scale;

  IidWnSamples out;
  out.config = config;
  out.draws.reserve(config.retained_draws());
  for (int it = 1; it <= config.iterations; ++it) {
    const std::uint64_t key = rng();
    const double sd = std::sqrt(sigma2);
    double sx = 0.0;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
      const int k = sample_winding(y[i], mu, sd, config.k_bound, counter_uniform(key, static_cast<std::uint64_t>(i)));
      x[i] = y[i] + kTwoPi * k;
      sx += x[i];
    }
    const double prec = n + 1.0 / s0sq;
    mu = sx / prec + std::sqrt(sigma2 / prec) * sample_normal(rng);
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += (x[i] - mu) * (x[i] - mu);
    const double shape = config.ig_shape + 0.5 * (n + 1);
    const double rate = config.ig_rate + 0.5 * (ss + mu * mu / s0sq);
    sigma2 = sample_inverse_gamma(shape, rate, rng);
    if (!std::isfinite(mu) || !std::isfinite(sigma2))
      throw NumericError("non-finite IID sampler state at iteration " + std::to_string(it));
    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) out.draws.push_back({it, mu, sigma2});
  }
  return out;
}

void save_iid(const IidWnSamples& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "draws.csv");
  if (!out) throw ResourceLimit("cannot write " + (dir / "draws.csv").string());
  out.precision(17);
  out << "iter,mu,sigma2\n";
  for (const IidDraw& d : samples.draws) out << d.iter << ',' << d.mu << ',' << d.sigma2 << '\n';
  nlohmann::ordered_json j;
  j["draws"] = samples.size();
  j["seed"] = samples.config.seed;
  std::ofstream(dir / "sampler.json") << j.dump(2) << '\n';
}

IidWnSamples load_iid(const std::filesystem::path& dir) {
  const auto path = dir / "draws.csv";
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  IidWnSamples s;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("iter,mu,sigma2", 0) != 0)
    throw ParseError(path.string(), 1, "expected header iter,mu,sigma2");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    IidDraw d;
    if (!(ls >> d.iter >> d.mu >> d.sigma2)) throw ParseError(path.string(), line_no, "malformed draw row");
    s.draws.push_back(d);
  }
  std::ifstream meta(dir / "sampler.json");
  if (meta) {
    try {
      s.config.seed = nlohmann::json::parse(meta).value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError((dir / "sampler.json").string(), 0, e.what());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Knots and basis

Eigen::Vector3d kernel_coordinates(const Location& loc) {
  if (loc.mode == Mode::planar) return {loc.x, loc.y, 0.0};
  return kSphereRadiusDegrees * loc.unit_vector();
}

std::vector<Location> select_knots(std::span<const Location> locations, int m, Rng& rng, int restarts,
                                   int max_iterations) {
  const int n = static_cast<int>(locations.size());
  if (m < 1) throw InvalidArgument("number of knots must be >= 1");
  if (restarts < 1 || max_iterations < 1) throw InvalidArgument("k-means restarts and iterations must be positive");
  std::vector<Eigen::Vector3d> p(n);
  std::set<std::array<double, 3>> distinct;
  for (int i = 0; i < n; ++i) {
    p[i] = kernel_coordinates(locations[i]);
    distinct.insert({p[i].x(), p[i].y(), p[i].z()});
  }
  if (static_cast<std::size_t>(m) > distinct.size())
    throw InvalidArgument("number of knots exceeds the number of distinct locations");
  const Mode mode = locations.front().mode;

  std::vector<Eigen::Vector3d> best;
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<int> assign(n);
  std::vector<double> d2(n);
  for (int rep = 0; rep < restarts; ++rep) {
    // k-means++ seeding.
    std::vector<Eigen::Vector3d> c;
    c.push_back(p[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
    for (int i = 0; i < n; ++i) d2[i] = (p[i] - c[0]).squaredNorm();
    while (static_cast<int>(c.size()) < m) {
      const int pick = std::discrete_distribution<int>(d2.begin(), d2.end())(rng);
      c.push_back(p[pick]);
      for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], (p[i] - c.back()).squaredNorm());
    }
    // Lloyd iterations.
    double sse = 0.0;
    for (int iter = 0; iter < max_iterations; ++iter) {
      bool changed = iter == 0;
      sse = 0.0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j) {
          const double d = (p[i] - c[j]).squaredNorm();
          if (d < dmin) {
            dmin = d;
            arg = j;
          }
        }
        if (assign[i] != arg) changed = true;
        assign[i] = arg;
        d2[i] = dmin;
        sse += dmin;
      }
      if (!changed) break;
      std::vector<Eigen::Vector3d> sum(m, Eigen::Vector3d::Zero());
      std::vector<int> count(m, 0);
      for (int i = 0; i < n; ++i) {
        sum[assign[i]] += p[i];
        ++count[assign[i]];
      }
      for (int j = 0; j < m; ++j) {
        if (count[j] > 0) {
          c[j] = sum[j] / count[j];
        } else {
          // Empty cluster: move it to the worst-served point.
          const int far = static_cast<int>(std::max_element(d2.begin(), d2.end()) - d2.begin());
          c[j] = p[far];
          d2[far] = 0.0;
        }
      }
    }
    if (sse < best_sse) {
      best_sse = sse;
      best = c;
    }
  }
  std::vector<Location> knots;
  knots.reserve(m);
  for (const auto& v : best) knots.push_back(from_kernel_coordinates(mode, v));
  return knots;
}

Eigen::MatrixXd lowrank_basis(std::span<const Location> locations, std::span<const Location> knots, double phi) {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw InvalidArgument("phi must be positive");
  const auto n = static_cast<Eigen::Index>(locations.size());
  const auto m = static_cast<Eigen::Index>(knots.size());
  std::vector<Eigen::Vector3d> kc(m);
  for (Eigen::Index j = 0; j < m; ++j) kc[j] = kernel_coordinates(knots[j]);
  const double norm = 1.0 / std::sqrt(kTwoPi * phi * phi);
  const double inv = 0.5 / (phi * phi);
  Eigen::MatrixXd b(n, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = kernel_coordinates(locations[i]);
    for (Eigen::Index j = 0; j < m; ++j) b(i, j) = norm * std::exp(-inv * (s - kc[j]).squaredNorm());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Low-rank sampler

void LowRankConfig::validate() const {
  if (knots < 1) throw InvalidArgument("number of knots must be >= 1");
  if (k_bound < 1 || k_bound > 64) throw InvalidArgument("k_bound must lie in [1, 64]");
  if (!(mu_prior_scale > 0.0)) throw InvalidArgument("mu prior scale must be positive");
  if (!(sigma_shape > 0.0) || !(sigma_rate > 0.0) || !(tau_shape > 0.0) || !(tau_rate > 0.0))
    throw InvalidArgument("inverse-gamma hyperparameters must be positive");
  if (!(phi_upper() > 0.0) || !std::isfinite(phi_upper())) throw InvalidArgument("phi upper bound must be positive");
  validate_schedule(iterations, burn_in, thin);
  if (!(step_phi > 0.0)) throw InvalidArgument("MH step must be positive");
  if (!(accept_low < accept_high)) throw InvalidArgument("acceptance window must be increasing");
  if (adapt_interval < 1) throw InvalidArgument("adaptation interval must be positive");
  if (kmeans_restarts < 1) throw InvalidArgument("k-means restarts must be positive");
}

LowRankSampler::LowRankSampler(std::span<const Angle> angles, std::span<const Location> locations,
                               std::vector<Location> knots, const LowRankConfig& config)
    : locations_(locations.begin(), locations.end()), knots_(std::move(knots)), config_(config) {
  config_.validate();
  n_ = static_cast<int>(angles.size());
  m_ = static_cast<int>(knots_.size());
  if (n_ == 0) throw InvalidArgument("no observations");
  if (static_cast<int>(locations.size()) != n_) throw InvalidArgument("location count does not match the angles");
  if (m_ == 0) throw InvalidArgument("no knots");
  y_.resize(n_);
  for (int i = 0; i < n_; ++i) y_[i] = angles[i].value();

  if (config_.init) {
    params_ = *config_.init;
  } else {
    try {
      const MomentEstimates me = circular_moment_estimates(angles);
      params_.mu = me.mean_direction.value();
      params_.tau2 = std::max(me.sigma2, 1e-4);
    } catch (const DegenerateError&) {
      params_.mu = 0.0;
      params_.tau2 = 10.0;
    }
    params_.sigma2 = 1.0;
    params_.phi = 0.5 * config_.phi_upper();
  }
  if (!(params_.sigma2 > 0.0) || !(params_.tau2 > 0.0) || !(params_.phi > 0.0) || !(params_.phi < config_.phi_upper()))
    throw InvalidArgument("initial low-rank parameters out of range");

  k_.assign(n_, 0);
  if (config_.unwrap_init) k_ = unwrap_winding(angles, locations, params_.mu, config_.k_bound);
  x_.resize(n_);
  for (int i = 0; i < n_; ++i) x_[i] = y_[i] + kTwoPi * k_[i];
  set_phi(params_.phi, lowrank_basis(locations_, knots_, params_.phi));
  // Start W at its conditional mean given X.
  Eigen::MatrixXd prec = btb_ / params_.tau2;
  prec.diagonal().array() += 1.0 / params_.sigma2;
  w_ = Eigen::LLT<Eigen::MatrixXd>(prec).solve(b_.transpose() * (x_.array() - params_.mu).matrix() / params_.tau2);
  bw_ = b_ * w_;
  adapt_phi_.step = config_.step_phi;
}

void LowRankSampler::set_phi(double phi, Eigen::MatrixXd b) {
  params_.phi = phi;
  b_ = std::move(b);
  btb_ = b_.transpose() * b_;
}

void LowRankSampler::set_state(const LowRankParams& params, const Eigen::VectorXd& w, std::span<const int> k) {
  if (w.size() != m_ || static_cast<int>(k.size()) != n_) throw InvalidArgument("state dimensions mismatch");
  if (!(params.sigma2 > 0.0) || !(params.tau2 > 0.0) || !(params.phi > 0.0) || !(params.phi < config_.phi_upper()))
    throw InvalidArgument("low-rank parameters out of range");
  const double old_phi = params_.phi;
  params_ = params;
  if (params.phi != old_phi || b_.size() == 0) set_phi(params.phi, lowrank_basis(locations_, knots_, params.phi));
  w_ = w;
  bw_ = b_ * w_;
  k_.assign(k.begin(), k.end());
  for (int i = 0; i < n_; ++i) x_[i] = y_[i] + kTwoPi * k_[i];
}

void LowRankSampler::set_angles(std::span<const Angle> angles) {
  if (static_cast<int>(angles.size()) != n_) throw InvalidArgument("angle count mismatch");
  for (int i = 0; i < n_; ++i) {
    y_[i] = angles[i].value();
    x_[i] = y_[i] + kTwoPi * k_[i];
  }
}

void LowRankSampler::update_winding(std::uint64_t key) {
  const double sd = std::sqrt(params_.tau2);
  const int m = config_.k_bound;
  const double mu = params_.mu;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_; ++i) {
    const int k = sample_winding(y_[i], mu + bw_[i], sd, m, counter_uniform(key, static_cast<std::uint64_t>(i)));
    k_[i] = k;
    x_[i] = y_[i] + kTwoPi * k;
  }
}

void LowRankSampler::update_w(Rng& rng) {
  Eigen::MatrixXd prec = btb_ / params_.tau2;
  prec.diagonal().array() += 1.0 / params_.sigma2;
  const Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericError("W full-conditional precision is not positive definite");
  const Eigen::VectorXd b = b_.transpose() * (x_.array() - params_.mu).matrix() / params_.tau2;
  w_ = sample_dense(llt, b, rng);
  bw_ = b_ * w_;
}

void LowRankSampler::update_mu(Rng& rng) {
  const double s0 = config_.mu_prior_scale;
  const double prec = n_ / params_.tau2 + 1.0 / (s0 * s0);
  const double s = (x_ - bw_).sum() / params_.tau2;
  params_.mu = s / prec + std::sqrt(1.0 / prec) * sample_normal(rng);
}

void LowRankSampler::update_sigma2(Rng& rng) {
  params_.sigma2 =
      sample_inverse_gamma(config_.sigma_shape + 0.5 * m_, config_.sigma_rate + 0.5 * w_.squaredNorm(), rng);
}

double LowRankSampler::residual_sq() const { return (x_.array() - params_.mu - bw_.array()).matrix().squaredNorm(); }

void LowRankSampler::update_tau2(Rng& rng) {
  params_.tau2 = sample_inverse_gamma(config_.tau_shape + 0.5 * n_, config_.tau_rate + 0.5 * residual_sq(), rng);
}

double LowRankSampler::log_phi_ratio(double phi_c, const Eigen::MatrixXd& b_c) const {
  const double upper = config_.phi_upper();
  const Eigen::VectorXd r_c = x_.array() - params_.mu - (b_c * w_).array();
  const double s_c = r_c.squaredNorm();
  const double s = residual_sq();
  const double phi = params_.phi;
  return -(s_c - s) / (2.0 * params_.tau2) + std::log(phi_c * (upper - phi_c)) - std::log(phi * (upper - phi));
}

bool LowRankSampler::update_phi(Rng& rng) {
  if (config_.fix_phi) return false;
  const double upper = config_.phi_upper();
  const double phi_c = inv_logit_box(logit_box(params_.phi, upper) + adapt_phi_.step * sample_normal(rng), upper);
  bool accept = false;
  if (phi_c > 0.0 && phi_c < upper) {
    Eigen::MatrixXd b_c = lowrank_basis(locations_, knots_, phi_c);
    const double lr = log_phi_ratio(phi_c, b_c);
    const double u = std::uniform_real_distribution<double>()(rng);
    accept = std::log(u) < lr;
    if (accept) {
      set_phi(phi_c, std::move(b_c));
      bw_ = b_ * w_;
    }
  }
  adapt_phi_.record(accept);
  return accept;
}

void LowRankSampler::sweep(Rng& rng) {
  update_winding(rng());
  update_w(rng);
  update_mu(rng);
  update_sigma2(rng);
  update_tau2(rng);
  update_phi(rng);
}

void LowRankSampler::adapt() { adapt_phi_.adapt(config_.accept_low, config_.accept_high); }

LowRankSamples fit_lowrank(std::span<const Angle> angles, std::span<const Location> locations,
                           const LowRankConfig& config, const LowRankProgressFn& progress) {
  config.validate();
  Rng rng(config.seed);
  std::vector<Location> knots = select_knots(locations, config.knots, rng, config.kmeans_restarts);
  LowRankSampler sampler(angles, locations, knots, config);
  LowRankSamples out;
  out.seed = config.seed;
  out.knots = std::move(knots);
  const int b = config.retained_draws();
  out.draws.reserve(b);
  if (config.keep_w) out.w.resize(config.knots, b);
  for (int it = 1; it <= config.iterations; ++it) {
    sampler.sweep(rng);
    const LowRankParams& p = sampler.params();
    if (!std::isfinite(p.mu) || !std::isfinite(p.sigma2) || !std::isfinite(p.tau2) || !std::isfinite(p.phi))
      throw NumericError("non-finite low-rank sampler state at iteration " + std::to_string(it));
    if (it <= config.burn_in && it % config.adapt_interval == 0) sampler.adapt();
    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) {
      const int col = static_cast<int>(out.draws.size());
      out.draws.push_back({it, p.mu, p.sigma2, p.tau2, p.phi});
      if (config.keep_w) out.w.col(col) = sampler.w();
    }
    if (progress) progress(it, p);
  }
  out.accept_phi = sampler.phi_stats().acceptance_rate();
  out.final_step_phi = sampler.step_phi();
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void save_lowrank(const LowRankSamples& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "draws.csv");
    if (!out) throw ResourceLimit("cannot write " + (dir / "draws.csv").string());
    out.precision(17);
    out << "iter,mu,sigma2,tau2,phi\n";
    for (const LowRankDraw& d : samples.draws)
      out << d.iter << ',' << d.mu << ',' << d.sigma2 << ',' << d.tau2 << ',' << d.phi << '\n';
  }
  {
    std::ofstream out(dir / "knots.csv");
    out.precision(17);
    const Mode mode = samples.knots.empty() ? Mode::planar : samples.knots.front().mode;
    out << (mode == Mode::planar ? "x,y\n" : "lon,lat\n");
    for (const Location& k : samples.knots) out << k.x << ',' << k.y << '\n';
  }
  if (samples.w.size() > 0) {
    std::ofstream out(dir / "W.bin", std::ios::binary);
    if (!out) throw ResourceLimit("cannot write " + (dir / "W.bin").string());
    const std::int64_t b = samples.w.cols();
    const std::int64_t m = samples.w.rows();
    out.write(kWMagic, sizeof kWMagic);
    out.write(reinterpret_cast<const char*>(&b), sizeof b);
    out.write(reinterpret_cast<const char*>(&m), sizeof m);
    out.write(reinterpret_cast<const char*>(samples.w.data()),
              static_cast<std::streamsize>(sizeof(double) * samples.w.size()));
    if (!out) throw ResourceLimit("failed writing W.bin");
  }
  nlohmann::ordered_json j;
  j["draws"] = samples.size();
  j["accept_phi"] = samples.accept_phi;
  j["final_step_phi"] = samples.final_step_phi;
  j["seed"] = samples.seed;
  std::ofstream(dir / "sampler.json") << j.dump(2) << '\n';
}

LowRankSamples load_lowrank(const std::filesystem::path& dir) {
  LowRankSamples s;
  const auto draws_path = dir / "draws.csv";
  std::ifstream in(draws_path);
  if (!in) throw InvalidArgument("cannot open " + draws_path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("iter,mu,sigma2,tau2,phi", 0) != 0)
    throw ParseError(draws_path.string(), 1, "expected header iter,mu,sigma2,tau2,phi");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    LowRankDraw d;
    if (!(ls >> d.iter >> d.mu >> d.sigma2 >> d.tau2 >> d.phi))
      throw ParseError(draws_path.string(), line_no, "malformed draw row");
    s.draws.push_back(d);
  }

  const auto knots_path = dir / "knots.csv";
  std::ifstream kin(knots_path);
  if (!kin) throw InvalidArgument("cannot open " + knots_path.string());
  if (!std::getline(kin, line)) throw ParseError(knots_path.string(), 1, "missing header");
  Mode mode = Mode::planar;
  if (line.rfind("lon,lat", 0) == 0) mode = Mode::spherical;
  else if (line.rfind("x,y", 0) != 0) throw ParseError(knots_path.string(), 1, "expected header x,y or lon,lat");
  line_no = 1;
  while (std::getline(kin, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) throw ParseError(knots_path.string(), line_no, "expected two columns");
    try {
      const double a = std::stod(cells[0]);
      const double b = std::stod(cells[1]);
      s.knots.push_back(mode == Mode::planar ? Location::planar(a, b) : Location::spherical(a, b));
    } catch (const std::logic_error&) {
      throw ParseError(knots_path.string(), line_no, "malformed knot row");
    }
  }

  const auto w_path = dir / "W.bin";
  std::ifstream wb(w_path, std::ios::binary);
  if (wb) {
    char magic[8];
    std::int64_t b = 0;
    std::int64_t m = 0;
    wb.read(magic, sizeof magic);
    wb.read(reinterpret_cast<char*>(&b), sizeof b);
    wb.read(reinterpret_cast<char*>(&m), sizeof m);
    if (!wb || std::memcmp(magic, kWMagic, sizeof magic) != 0 || b < 0 || m < 0)
      throw ParseError(w_path.string(), 0, "bad W header");
    if (b != static_cast<std::int64_t>(s.draws.size()) || m != static_cast<std::int64_t>(s.knots.size()))
      throw ParseError(w_path.string(), 0, "W dimensions do not match draws.csv and knots.csv");
    s.w.resize(m, b);
    wb.read(reinterpret_cast<char*>(s.w.data()), static_cast<std::streamsize>(sizeof(double) * m * b));
    if (!wb) throw ParseError(w_path.string(), 0, "truncated W payload");
  }
  std::ifstream meta(dir / "sampler.json");
  if (meta) {
    try {
      const auto j = nlohmann::json::parse(meta);
      s.accept_phi = j.value("accept_phi", 0.0);
      s.final_step_phi = j.value("final_step_phi", 0.0);
      s.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError((dir / "sampler.json").string(), 0, e.what());
    }
  }
  return s;
}

}  // namespace wgmrf

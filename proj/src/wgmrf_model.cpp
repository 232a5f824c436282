#include "wgmrf/wgmrf_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "wgmrf/errors.hpp"

namespace wgmrf {

namespace {

constexpr char kEpsMagic[8] = {'W', 'G', 'M', 'R', 'F', 'E', 'P', 'S'};

bool finite_params(const WgmrfParams& p) {
  return std::isfinite(p.mu) && std::isfinite(p.sigma2) && std::isfinite(p.psi) && std::isfinite(p.r);
}

}  // namespace

void WgmrfParams::validate(double delta) const {
  if (!std::isfinite(mu)) throw InvalidArgument("mu must be finite");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be positive");
  if (!(psi > 0.0) || !(psi < delta)) throw InvalidArgument("psi must lie in (0, delta)");
  if (!(r > 0.0) || !(r < 1.0)) throw InvalidArgument("r must lie in (0, 1)");
}

void WgmrfConfig::validate() const {
  if (k_bound < 1 || k_bound > 64) throw InvalidArgument("k_bound must lie in [1, 64]");
  if (!(mu_prior_scale > 0.0)) throw InvalidArgument("mu prior scale must be positive");
  if (!(ig_shape > 0.0) || !(ig_rate > 0.0)) throw InvalidArgument("inverse-gamma hyperparameters must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be positive");
  if (iterations < 1) throw InvalidArgument("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw InvalidArgument("burn_in must satisfy 0 <= burn_in < iterations");
  if (thin < 1) throw InvalidArgument("thinning must be >= 1");
  if (!(step_psi > 0.0) || !(step_r > 0.0)) throw InvalidArgument("MH steps must be positive");
  if (!(accept_low < accept_high)) throw InvalidArgument("acceptance window must be increasing");
  if (adapt_interval < 1) throw InvalidArgument("adaptation interval must be positive");
}

WgmrfParams initial_params(std::span<const Angle> angles, const WgmrfConfig& config) {
  WgmrfParams p;
  try {
    const MomentEstimates m = circular_moment_estimates(angles);
    p.mu = m.mean_direction.value();
    p.sigma2 = std::max(m.sigma2, 1e-4);
  } catch (const DegenerateError&) {
    p.mu = 0.0;
    p.sigma2 = 10.0;
  }
  p.psi = config.delta / 10.0;
  p.r = 0.5;
  if (config.stress_init) {
    p.mu += kPi;
    p.sigma2 *= 10.0;
    p.psi = 0.9 * config.delta;
    p.r = 0.1;
  }
  return p;
}

std::vector<int> unwrap_winding(std::span<const Angle> angles, std::span<const Location> locations,
                                double centre, int m) {
  const int n = static_cast<int>(angles.size());
  if (locations.size() != angles.size()) throw InvalidArgument("unwrap_winding: size mismatch");
  std::vector<int> k(n, 0);
  if (n < 2) return k;

  // Candidate edges: pairs sharing a grid cell or adjacent cells, with about
  // two sites per cell.
  const BoundingBox box = bounding_box(locations);
  const double area = std::max(box.width(), 1e-12) * std::max(box.height(), 1e-12);
  const double cell = std::max(std::sqrt(2.0 * area / n), 1e-9);
  const auto nx = static_cast<long long>(std::floor(box.width() / cell)) + 1;
  std::unordered_map<long long, std::vector<int>> grid;
  std::vector<std::pair<long long, long long>> cells(n);
  for (int i = 0; i < n; ++i) {
    const auto cx = static_cast<long long>(std::floor((locations[i].x - box.xmin) / cell));
    const auto cy = static_cast<long long>(std::floor((locations[i].y - box.ymin) / cell));
    cells[i] = {cx, cy};
    grid[cy * nx + cx].push_back(i);
  }
  struct Edge {
    double w;
    int a, b;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (long long dy = -1; dy <= 1; ++dy) {
      for (long long dx = -1; dx <= 1; ++dx) {
        const long long cx = cells[i].first + dx;
        const long long cy = cells[i].second + dy;
        if (cx < 0 || cy < 0 || cx >= nx) continue;
        const auto it = grid.find(cy * nx + cx);
        if (it == grid.end()) continue;
        for (int j : it->second) {
          if (j <= i) continue;
          const double d = wrap_angle(angles[j].value() - angles[i].value() + kPi).value() - kPi;
          edges.push_back({std::abs(d), i, j});
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.w < b.w || (a.w == b.w && (a.a < b.a || (a.a == b.a && a.b < b.b)));
  });

  // Kruskal spanning forest on the wrapped differences.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::vector<int>> adj(n);
  for (const Edge& e : edges) {
    const int ra = find(e.a);
    const int rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }

  std::vector<double> x(n, 0.0);
  std::vector<char> seen(n, 0);
  std::vector<int> comp;
  for (int root = 0; root < n; ++root) {
    if (seen[root]) continue;
    comp.clear();
    std::queue<int> q;
    q.push(root);
    seen[root] = 1;
    x[root] = angles[root].value();
    double sum = 0.0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      comp.push_back(u);
      sum += x[u];
      for (int v : adj[u]) {
        if (seen[v]) continue;
        seen[v] = 1;
        x[v] = x[u] + (wrap_angle(angles[v].value() - angles[u].value() + kPi).value() - kPi);
        q.push(v);
      }
    }
    const double shift = std::round((centre - sum / static_cast<double>(comp.size())) / kTwoPi);
    for (int u : comp) {
      const int w = static_cast<int>(std::lround((x[u] - angles[u].value()) / kTwoPi + shift));
      k[u] = std::clamp(w, -m, m);
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Simulation

Simulation simulate(const FemTriple& fem, const ProjectionMatrix& a, const WgmrfParams& params, Rng& rng) {
  if (!(params.sigma2 > 0.0) || !(params.psi > 0.0) || !(params.r > 0.0) || !(params.r <= 1.0))
    throw InvalidArgument("simulation parameters out of range");
  if (a.cols() != fem.pattern.dimension()) throw InvalidArgument("projection does not match the FEM mesh");
  const CholeskyFactor factor = factorize(spde_precision(fem, params.psi));
  Simulation out;
  out.eps = std::sqrt(params.r * params.sigma2) *
            sample_canonical(factor, Eigen::VectorXd::Zero(factor.dimension()), rng);
  out.x = a.apply(out.eps).array() + params.mu;
  const double nugget = std::sqrt((1.0 - params.r) * params.sigma2);
  out.angles.reserve(out.x.size());
  for (Eigen::Index i = 0; i < out.x.size(); ++i) {
    out.x[i] += nugget * sample_normal(rng);
    out.angles.emplace_back(out.x[i]);
  }
  return out;
}

Simulation simulate(const Mesh& mesh, const FemTriple& fem, const WgmrfParams& params,
                    std::span<const Location> locations, Rng& rng) {
  return simulate(fem, projection(mesh, locations), params, rng);
}

// ---------------------------------------------------------------------------
// Sampler

WgmrfSampler::WgmrfSampler(const WgmrfData& data, const FemTriple& fem, const WgmrfConfig& config)
    : data_(data), fem_(fem), config_(config) {
  config_.validate();
  n_ = static_cast<int>(data.angles.size());
  n_star_ = fem.pattern.dimension();
  if (n_ == 0) throw InvalidArgument("no observations");
  if (data.A.rows() != n_) throw InvalidArgument("projection rows do not match the number of angles");
  if (data.A.cols() != n_star_) throw InvalidArgument("projection columns do not match the mesh");

  y_.resize(n_);
  for (int i = 0; i < n_; ++i) y_[i] = data.angles[i].value();
  q_ = fem.pattern;
  q_candidate_ = fem.pattern;
  post_ = fem.pattern;
  gram_ = data.A.gram_values(fem.pattern);

  params_ = config_.init ? *config_.init : initial_params(data.angles, config_);
  params_.validate(config_.delta);
  k_.assign(n_, 0);
  if (config_.winding_init == WindingInit::unwrap && !data.locations.empty()) {
    if (static_cast<int>(data.locations.size()) != n_) throw InvalidArgument("location count does not match the angles");
    k_ = unwrap_winding(data.angles, data.locations, params_.mu, config_.k_bound);
  }
  x_.resize(n_);
  for (int i = 0; i < n_; ++i) x_[i] = y_[i] + kTwoPi * k_[i];
  eps_ = Eigen::VectorXd::Zero(n_star_);

  spde_precision_into(fem_, params_.psi, q_);
  q_factor_ = factorize(q_);
  post_factor_ = q_factor_;
  log_det_q_ = q_factor_.log_det();
  // Start eps* at its conditional mean given X.
  fill_posterior_precision();
  post_factor_.refactorize(post_);
  eps_ = post_factor_.solve(data_.A.apply_transpose(x_.array() - params_.mu) / (1.0 - params_.r));
  eps_quad_ = q_.quadratic_form(eps_);

  adapt_psi_.step = config_.step_psi;
  adapt_r_.step = config_.step_r;
}

void WgmrfSampler::refresh_q() {
  spde_precision_into(fem_, params_.psi, q_);
  q_factor_.refactorize(q_);
  log_det_q_ = q_factor_.log_det();
  eps_quad_ = q_.quadratic_form(eps_);
}

void WgmrfSampler::set_state(const WgmrfParams& params, const Eigen::VectorXd& eps, std::span<const int> k) {
  params.validate(config_.delta);
  if (eps.size() != n_star_ || static_cast<int>(k.size()) != n_) throw InvalidArgument("state dimensions mismatch");
  params_ = params;
  eps_ = eps;
  k_.assign(k.begin(), k.end());
  for (int i = 0; i < n_; ++i) x_[i] = y_[i] + kTwoPi * k_[i];
  refresh_q();
}

void WgmrfSampler::set_angles(std::span<const Angle> angles) {
  if (static_cast<int>(angles.size()) != n_) throw InvalidArgument("angle count mismatch");
  for (int i = 0; i < n_; ++i) {
    y_[i] = angles[i].value();
    x_[i] = y_[i] + kTwoPi * k_[i];
  }
}

void WgmrfSampler::update_winding(std::uint64_t key) {
  const double sd = std::sqrt(params_.sigma2 * (1.0 - params_.r));
  const int m = config_.k_bound;
  const double mu = params_.mu;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_; ++i) {
    const double mean = mu + data_.A.row_dot(i, eps_);
    const int k = sample_winding(y_[i], mean, sd, m, counter_uniform(key, static_cast<std::uint64_t>(i)));
    k_[i] = k;
    x_[i] = y_[i] + kTwoPi * k;
  }
}

void WgmrfSampler::fill_posterior_precision() {
  const double inv_nug = 1.0 / (1.0 - params_.r);
  const double inv_r = 1.0 / params_.r;
  const auto qv = q_.values();
  auto pv = post_.values();
  for (std::size_t p = 0; p < pv.size(); ++p) pv[p] = inv_nug * gram_[p] + inv_r * qv[p];
}

void WgmrfSampler::update_spatial_effects(Rng& rng) {
  const double inv_nug = 1.0 / (1.0 - params_.r);
  fill_posterior_precision();
  post_factor_.refactorize(post_);
  const Eigen::VectorXd b = inv_nug * data_.A.apply_transpose(x_.array() - params_.mu);
  Eigen::VectorXd z(n_star_);
  const double sigma = std::sqrt(params_.sigma2);
  for (int i = 0; i < n_star_; ++i) z[i] = sigma * sample_normal(rng);
  eps_ = post_factor_.sample_with_noise(b, z);
  eps_quad_ = q_.quadratic_form(eps_);
}

void WgmrfSampler::update_mu(Rng& rng) {
  const double inv_nug = 1.0 / (1.0 - params_.r);
  double s = 0.0;
  for (int i = 0; i < n_; ++i) s += x_[i] - data_.A.row_dot(i, eps_);
  const double s0 = config_.mu_prior_scale;
  const double prec = n_ * inv_nug + 1.0 / (s0 * s0);
  const double mean = s * inv_nug / prec;
  params_.mu = mean + std::sqrt(params_.sigma2 / prec) * sample_normal(rng);
}

double WgmrfSampler::residual_sq() const {
  double s = 0.0;
  for (int i = 0; i < n_; ++i) {
    const double e = x_[i] - params_.mu - data_.A.row_dot(i, eps_);
    s += e * e;
  }
  return s;
}

double WgmrfSampler::eps_quad() const { return eps_quad_; }

void WgmrfSampler::update_sigma2(Rng& rng) {
  const double s0 = config_.mu_prior_scale;
  const double shape = config_.ig_shape + 0.5 * (n_ + n_star_ + 1);
  const double rate = config_.ig_rate + 0.5 * (eps_quad_ / params_.r + residual_sq() / (1.0 - params_.r) +
                                               params_.mu * params_.mu / (s0 * s0));
  params_.sigma2 = sample_inverse_gamma(shape, rate, rng);
}

double WgmrfSampler::log_psi_ratio(double psi_c) {
  const double delta = config_.delta;
  spde_precision_into(fem_, psi_c, q_candidate_);
  q_factor_.refactorize(q_candidate_);
  const double ld_c = q_factor_.log_det();
  const double quad_c = q_candidate_.quadratic_form(eps_);
  const double psi = params_.psi;
  return 0.5 * (ld_c - log_det_q_) - (quad_c - eps_quad_) / (2.0 * params_.sigma2 * params_.r) +
         std::log(psi_c * (delta - psi_c)) - std::log(psi * (delta - psi));
}

bool WgmrfSampler::update_psi(Rng& rng) {
  if (config_.fix_psi) return false;
  const double delta = config_.delta;
  const double eta = logit_box(params_.psi, delta) + adapt_psi_.step * sample_normal(rng);
  const double psi_c = inv_logit_box(eta, delta);
  bool accept = false;
  if (psi_c > 0.0 && psi_c < delta) {
    double lr = -INFINITY;
    try {
      lr = log_psi_ratio(psi_c);
    } catch (const NotSpdError&) {
      lr = -INFINITY;
    }
    const double u = std::uniform_real_distribution<double>()(rng);
    accept = std::log(u) < lr;
    if (accept) {
      params_.psi = psi_c;
      std::swap(q_, q_candidate_);
      log_det_q_ = q_factor_.log_det();
      eps_quad_ = q_.quadratic_form(eps_);
    }
  }
  adapt_psi_.record(accept);
  return accept;
}

double WgmrfSampler::log_r_ratio(double r_c) const {
  const double r = params_.r;
  const double s = residual_sq();
  const double two_s2 = 2.0 * params_.sigma2;
  return -0.5 * n_ * (std::log(1.0 - r_c) - std::log(1.0 - r)) - s / two_s2 * (1.0 / (1.0 - r_c) - 1.0 / (1.0 - r)) -
         0.5 * n_star_ * (std::log(r_c) - std::log(r)) - eps_quad_ / two_s2 * (1.0 / r_c - 1.0 / r) +
         std::log(r_c * (1.0 - r_c)) - std::log(r * (1.0 - r));
}

bool WgmrfSampler::update_r(Rng& rng) {
  if (config_.fix_r) return false;
  const double eta = logit_box(params_.r, 1.0) + adapt_r_.step * sample_normal(rng);
  const double r_c = inv_logit_box(eta, 1.0);
  bool accept = false;
  if (r_c > 0.0 && r_c < 1.0) {
    const double lr = log_r_ratio(r_c);
    const double u = std::uniform_real_distribution<double>()(rng);
    accept = std::log(u) < lr;
    if (accept) params_.r = r_c;
  }
  adapt_r_.record(accept);
  return accept;
}

void WgmrfSampler::sweep(Rng& rng) {
  update_winding(rng());
  update_spatial_effects(rng);
  update_mu(rng);
  update_sigma2(rng);
  update_psi(rng);
  update_r(rng);
}

void WgmrfSampler::adapt() {
  adapt_psi_.adapt(config_.accept_low, config_.accept_high);
  adapt_r_.adapt(config_.accept_low, config_.accept_high);
}

PosteriorSamples fit_wgmrf(const WgmrfData& data, const FemTriple& fem, const WgmrfConfig& config,
                           const ProgressFn& progress) {
  WgmrfSampler sampler(data, fem, config);
  Rng rng(config.seed);
  PosteriorSamples out;
  out.seed = config.seed;
  const int b = config.retained_draws();
  out.draws.reserve(b);
  if (config.keep_eps) out.eps.resize(fem.pattern.dimension(), b);
  out.trace.reserve(config.iterations);
  for (int it = 1; it <= config.iterations; ++it) {
    sampler.sweep(rng);
    const WgmrfParams& p = sampler.params();
    if (!finite_params(p) || !std::isfinite(sampler.eps_quad()))
      throw NumericError("non-finite sampler state at iteration " + std::to_string(it));
    out.trace.push_back({it, p, sampler.step_psi(), sampler.step_r()});
    if (it <= config.burn_in && it % config.adapt_interval == 0) sampler.adapt();
    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) {
      const int col = static_cast<int>(out.draws.size());
      out.draws.push_back({it, p.mu, p.sigma2, p.psi, p.r});
      if (config.keep_eps) out.eps.col(col) = sampler.eps();
    }
    if (progress) progress(it, p);
  }
  out.accept_psi = sampler.psi_stats().acceptance_rate();
  out.accept_r = sampler.r_stats().acceptance_rate();
  out.final_step_psi = sampler.step_psi();
  out.final_step_r = sampler.step_r();
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void save_posterior(const PosteriorSamples& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "draws.csv");
    if (!out) throw ResourceLimit("cannot write " + (dir / "draws.csv").string());
    out.precision(17);
    out << "iter,mu,sigma2,psi,r\n";
    for (const Draw& d : samples.draws) out << d.iter << ',' << d.mu << ',' << d.sigma2 << ',' << d.psi << ',' << d.r << '\n';
  }
  {
    std::ofstream out(dir / "trace.csv");
    out.precision(17);
    out << "iter,mu,sigma2,psi,r,step_psi,step_r\n";
    for (const TraceRow& t : samples.trace)
      out << t.iter << ',' << t.params.mu << ',' << t.params.sigma2 << ',' << t.params.psi << ',' << t.params.r << ','
          << t.step_psi << ',' << t.step_r << '\n';
  }
  if (samples.eps.size() > 0) {
    std::ofstream out(dir / "eps_star.bin", std::ios::binary);
    if (!out) throw ResourceLimit("cannot write " + (dir / "eps_star.bin").string());
    const std::int64_t b = samples.eps.cols();
    const std::int64_t n = samples.eps.rows();
    out.write(kEpsMagic, sizeof kEpsMagic);
    out.write(reinterpret_cast<const char*>(&b), sizeof b);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(samples.eps.data()),
              static_cast<std::streamsize>(sizeof(double) * samples.eps.size()));
    if (!out) throw ResourceLimit("failed writing eps_star.bin");
  }
  nlohmann::ordered_json j;
  j["draws"] = samples.size();
  j["accept_psi"] = samples.accept_psi;
  j["accept_r"] = samples.accept_r;
  j["final_step_psi"] = samples.final_step_psi;
  j["final_step_r"] = samples.final_step_r;
  j["seed"] = samples.seed;
  std::ofstream(dir / "sampler.json") << j.dump(2) << '\n';
}

PosteriorSamples load_posterior(const std::filesystem::path& dir) {
  PosteriorSamples s;
  const auto draws_path = dir / "draws.csv";
  std::ifstream in(draws_path);
  if (!in) throw InvalidArgument("cannot open " + draws_path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("iter,mu,sigma2,psi,r", 0) != 0)
    throw ParseError(draws_path.string(), 1, "expected header iter,mu,sigma2,psi,r");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Draw d;
    if (!(ls >> d.iter >> d.mu >> d.sigma2 >> d.psi >> d.r)) throw ParseError(draws_path.string(), line_no, "malformed draw row");
    s.draws.push_back(d);
  }
  const auto eps_path = dir / "eps_star.bin";
  std::ifstream eb(eps_path, std::ios::binary);
  if (eb) {
    char magic[8];
    std::int64_t b = 0;
    std::int64_t n = 0;
    eb.read(magic, sizeof magic);
    eb.read(reinterpret_cast<char*>(&b), sizeof b);
    eb.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!eb || std::memcmp(magic, kEpsMagic, sizeof magic) != 0 || b < 0 || n < 0)
      throw ParseError(eps_path.string(), 0, "bad eps_star header");
    if (b != static_cast<std::int64_t>(s.draws.size()))
      throw ParseError(eps_path.string(), 0, "eps_star draw count does not match draws.csv");
    s.eps.resize(n, b);
    eb.read(reinterpret_cast<char*>(s.eps.data()), static_cast<std::streamsize>(sizeof(double) * n * b));
    if (!eb) throw ParseError(eps_path.string(), 0, "truncated eps_star payload");
  }
  const auto meta_path = dir / "sampler.json";
  std::ifstream meta(meta_path);
  if (meta) {
    try {
      const auto j = nlohmann::json::parse(meta);
      s.accept_psi = j.value("accept_psi", 0.0);
      s.accept_r = j.value("accept_r", 0.0);
      s.final_step_psi = j.value("final_step_psi", 0.0);
      s.final_step_r = j.value("final_step_r", 0.0);
      s.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(meta_path.string(), 0, e.what());
    }
  }
  return s;
}

}  // namespace wgmrf

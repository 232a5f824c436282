#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <new>
#include <ostream>
#include <sstream>

#include "config.hpp"
#include "io.hpp"
#include "wgmrf/errors.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/prediction.hpp"
#include "wgmrf/validation.hpp"

namespace wgmrf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Streams {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;
};

void warn(const Streams& io, const std::string& msg) { io.err << "warning: " << msg << '\n'; }

std::vector<double> parse_list(const std::string& s, std::size_t expected, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw InvalidArgument(what + ": not a number '" + tok + "'");
    }
  }
  if (v.size() != expected)
    throw InvalidArgument(what + ": expected " + std::to_string(expected) + " comma-separated values");
  return v;
}

BoundingBox parse_box(const std::string& s) {
  const auto v = parse_list(s, 4, "box");
  BoundingBox b{v[0], v[1], v[2], v[3]};
  if (!(b.xmax > b.xmin) || !(b.ymax > b.ymin)) throw InvalidArgument("box must be xmin,ymin,xmax,ymax with min < max");
  return b;
}

/// Largest corner-to-corner distance of the bounding box, in FEM units
/// (coordinate units in the plane, degrees of arc on the sphere).
double domain_diameter(std::span<const Location> locs) {
  const BoundingBox b = bounding_box(locs);
  if (locs.front().mode == Mode::planar) return b.diagonal();
  const Location c[4] = {Location::spherical(b.xmin, b.ymin), Location::spherical(b.xmax, b.ymin),
                         Location::spherical(b.xmin, b.ymax), Location::spherical(b.xmax, b.ymax)};
  double d = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) d = std::max(d, geodesic_distance(c[i], c[j]));
  return d / kEarthRadiusKm * kSphereRadiusDegrees;
}

void check_mode(const Mesh& mesh, Mode data_mode) {
  if (mesh.mode() != data_mode)
    throw InvalidArgument(std::string("mesh is ") + mode_name(mesh.mode()) + " but the data are " +
                          mode_name(data_mode));
}

void resolve_delta(RunConfig& cfg, std::span<const Location> locs) {
  const double d = domain_diameter(locs);
  if (cfg.wgmrf.delta == 0.0) cfg.wgmrf.delta = d;
  if (cfg.lowrank.delta == 0.0) cfg.lowrank.delta = d;
}

int progress_every(int iterations) { return std::max(1, iterations / 10); }

struct Fitted {
  ModelKind model = ModelKind::wgmrf;
  PosteriorSamples wgmrf;
  LowRankSamples lowrank;
  IidWnSamples iid;
};

Fitted fit_model(ModelKind model, const RunConfig& cfg, const Dataset& data, const Mesh* mesh, const FemTriple* fem,
                 const Streams& io, const std::string& label) {
  Fitted f;
  f.model = model;
  const int every = progress_every(cfg.iterations);
  switch (model) {
    case ModelKind::iid:
      f.iid = fit_iid_wn(data.angles, cfg.iid);
      break;
    case ModelKind::lowrank:
      f.lowrank = fit_lowrank(data.angles, data.locations, cfg.lowrank, [&](int it, const LowRankParams& p) {
        if (!io.quiet && it % every == 0)
          io.err << label << " iter " << it << " mu " << p.mu << " sigma2 " << p.sigma2 << " tau2 " << p.tau2
                 << " phi " << p.phi << '\n';
      });
      break;
    case ModelKind::wgmrf: {
      if (!mesh || !fem) throw InvalidArgument("the wgmrf model needs --mesh");
      WgmrfData d{data.angles, projection(*mesh, data.locations), data.locations};
      f.wgmrf = fit_wgmrf(d, *fem, cfg.wgmrf, [&](int it, const WgmrfParams& p) {
        if (!io.quiet && it % every == 0)
          io.err << label << " iter " << it << " mu " << p.mu << " sigma2 " << p.sigma2 << " psi " << p.psi << " r "
                 << p.r << '\n';
      });
      break;
    }
  }
  return f;
}

std::vector<CircularPrediction> predict_fitted(const Fitted& f, const Mesh* mesh,
                                               std::span<const Location> locs) {
  switch (f.model) {
    case ModelKind::iid: return predict_iid(f.iid, locs);
    case ModelKind::lowrank: return predict_lowrank(f.lowrank, locs);
    case ModelKind::wgmrf: return predict_wgmrf(f.wgmrf, *mesh, locs);
  }
  return {};
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string metrics_header() {
  return "sc_rmse,crmse,cmae,resultant_length,circular_correlation,avg_concentration";
}

std::string metrics_row(const MetricsReport& m) {
  return fmt(m.sc_rmse) + ',' + fmt(m.crmse) + ',' + fmt(m.cmae) + ',' + fmt(m.resultant_length) + ',' +
         (m.circular_correlation ? fmt(*m.circular_correlation) : std::string("NA")) + ',' +
         fmt(m.avg_concentration);
}

fs::path make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ResourceLimit("cannot create directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

DatasetOptions dataset_options(const std::string& units, bool allow_duplicates) {
  DatasetOptions o;
  o.allow_duplicates = allow_duplicates;
  if (units == "auto") o.units = AngleUnits::auto_detect;
  else if (units == "radians") o.units = AngleUnits::radians;
  else if (units == "degrees") o.units = AngleUnits::degrees;
  else throw InvalidArgument("--units must be auto, radians or degrees");
  return o;
}

Dataset load_data(const std::string& path, const DatasetOptions& opt, const Streams& io) {
  Dataset d = read_dataset(path, opt);
  for (const auto& w : d.warnings) warn(io, w);
  return d;
}

// ---------------------------------------------------------------------------
// Commands

struct SimulateArgs {
  std::string mesh, out, preset = "paper-sim", region, grid;
  int sites = 0;
  std::optional<std::uint64_t> seed;
  std::optional<double> mu, sigma2, psi, r;
};

void cmd_simulate(const SimulateArgs& a, const Streams& io) {
  if (!a.seed) throw InvalidArgument("simulate needs --seed");
  if (a.preset != "paper-sim") throw InvalidArgument("unknown preset '" + a.preset + "'");
  WgmrfParams p{3.0, 10.0 / 3.0, 3.0, 0.95};
  if (a.mu) p.mu = *a.mu;
  if (a.sigma2) p.sigma2 = *a.sigma2;
  if (a.psi) p.psi = *a.psi;
  if (a.r) p.r = *a.r;
  p.validate(std::numeric_limits<double>::infinity());

  const Mesh mesh = load_mesh(a.mesh);
  const BoundingBox box = a.region.empty() ? bounding_box(mesh.nodes()) : parse_box(a.region);
  const Mode mode = mesh.mode();
  const auto make = [&](double x, double y) {
    return mode == Mode::spherical ? Location::spherical(x, y) : Location::planar(x, y);
  };
  std::vector<Location> locs;
  Rng rng(*a.seed);
  if (!a.grid.empty()) {
    const auto g = parse_list(a.grid, 2, "--grid");
    const int nx = static_cast<int>(g[0]);
    const int ny = static_cast<int>(g[1]);
    if (nx < 1 || ny < 1 || nx != g[0] || ny != g[1]) throw InvalidArgument("--grid needs two positive integers");
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        locs.push_back(make(box.xmin + (i + 0.5) * box.width() / nx, box.ymin + (j + 0.5) * box.height() / ny));
  } else {
    if (a.sites < 1) throw InvalidArgument("simulate needs --sites N or --grid NX,NY");
    std::uniform_real_distribution<double> ux(box.xmin, box.xmax), uy(box.ymin, box.ymax);
    for (int i = 0; i < a.sites; ++i) {
      const double x = ux(rng);
      locs.push_back(make(x, uy(rng)));
    }
  }
  const FemTriple fem = fem_matrices(mesh);
  const Simulation sim = simulate(mesh, fem, p, locs, rng);

  const fs::path dir = make_dir(a.out);
  Dataset d;
  d.mode = mode;
  d.locations = locs;
  d.angles = sim.angles;
  write_dataset(d, dir / "data.csv");
  json truth = {{"preset", a.preset}, {"mu", p.mu}, {"sigma2", p.sigma2}, {"psi", p.psi}, {"r", p.r},
                {"n_sites", locs.size()}};
  std::ofstream(dir / "truth.json") << truth.dump(2) << '\n';

  Manifest m;
  m.command = "simulate";
  m.seed = *a.seed;
  m.has_seed = true;
  m.config = {{"truth", truth},
              {"region", {box.xmin, box.ymin, box.xmax, box.ymax}},
              {"grid", a.grid},
              {"sites", a.sites}};
  m.add_input(a.mesh);
  m.add_output(dir / "data.csv");
  m.add_output(dir / "truth.json");
  m.write(dir / "manifest.json");
  io.out << "simulated " << locs.size() << " sites into " << dir.string() << '\n';
}

struct MeshBuildArgs {
  std::string mode = "planar", bbox, data, out;
  double edge = 0.0, extension = 0.0, margin = 5.0;
  int subdivisions = 0;
};

void cmd_mesh_build(const MeshBuildArgs& a, const Streams& io) {
  const Mode mode = parse_mode(a.mode);
  std::optional<BoundingBox> box;
  Manifest m;
  m.command = "mesh build";
  if (!a.bbox.empty()) box = parse_box(a.bbox);
  if (!a.data.empty()) {
    const Dataset d = read_dataset(a.data, {AngleUnits::radians, true});
    if (d.mode != mode) throw InvalidArgument("--data mode does not match --mode");
    box = bounding_box(d.locations);
    m.add_input(a.data);
  }
  Mesh mesh;
  if (mode == Mode::planar) {
    if (!box) throw InvalidArgument("planar mesh needs --bbox or --data");
    if (!(a.edge > 0.0)) throw InvalidArgument("planar mesh needs --edge > 0");
    mesh = build_planar_mesh(*box, a.edge, a.extension);
  } else {
    if (a.subdivisions < 1) throw InvalidArgument("spherical mesh needs --subdivisions >= 1");
    mesh = build_spherical_mesh(a.subdivisions);
    if (box) mesh = crop_mesh(mesh, *box, a.margin);
  }
  save_mesh(mesh, a.out);
  m.config = {{"mode", a.mode}, {"edge", a.edge}, {"extension", a.extension}, {"subdivisions", a.subdivisions},
              {"margin", a.margin}};
  if (box) m.config["bbox"] = {box->xmin, box->ymin, box->xmax, box->ymax};
  m.add_output(a.out);
  m.write(sidecar(a.out));
  io.out << "mesh: " << mesh.num_nodes() << " nodes, " << mesh.num_triangles() << " triangles -> " << a.out << '\n';
}

void cmd_mesh_inspect(const std::string& path, std::optional<double> psi, const Streams& io) {
  const Mesh mesh = load_mesh(path);
  const BoundingBox b = bounding_box(mesh.nodes());
  double area = 0.0, amin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    area += mesh.triangle_area(t);
    amin = std::min(amin, mesh.triangle_area(t));
  }
  io.out << "mode: " << mode_name(mesh.mode()) << '\n'
         << "nodes: " << mesh.num_nodes() << '\n'
         << "triangles: " << mesh.num_triangles() << '\n'
         << "max_edge: " << mesh.max_edge_length() << '\n'
         << "total_area: " << area << '\n'
         << "min_triangle_area: " << amin << '\n'
         << "bbox: " << b.xmin << ',' << b.ymin << ',' << b.xmax << ',' << b.ymax << '\n';
  if (psi) {
    const FemTriple fem = fem_matrices(mesh);
    std::vector<Location> probes;
    const int step = std::max(1, mesh.num_nodes() / 50);
    for (int i = 0; i < mesh.num_nodes(); i += step) probes.push_back(mesh.nodes()[i]);
    const Eigen::VectorXd v = marginal_variance_diagnostic(mesh, fem, *psi, probes);
    io.out << "marginal_variance_min: " << v.minCoeff() << '\n'
           << "marginal_variance_mean: " << v.mean() << '\n'
           << "marginal_variance_max: " << v.maxCoeff() << '\n';
  }
}

struct FitArgs {
  std::string config, data, mesh, out, model, units = "auto";
  bool allow_duplicates = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations, burn_in, thin, knots;
};

RunConfig resolve(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                  const std::optional<int>& iterations, const std::optional<int>& burn_in,
                  const std::optional<int>& thin, const std::optional<int>& knots) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  if (seed) cfg.seed = seed;
  if (iterations) cfg.iterations = *iterations;
  if (burn_in) cfg.burn_in = *burn_in;
  if (thin) cfg.thin = *thin;
  if (knots) cfg.lowrank.knots = *knots;
  return cfg;
}

void cmd_fit(const FitArgs& a, const Streams& io) {
  RunConfig cfg = resolve(a.config, a.seed, a.iterations, a.burn_in, a.thin, a.knots);
  if (!a.model.empty()) cfg.model = parse_model(a.model);
  cfg.finalize();
  const Dataset data = load_data(a.data, dataset_options(a.units, a.allow_duplicates), io);
  resolve_delta(cfg, data.locations);

  Manifest m;
  m.command = "fit";
  m.seed = *cfg.seed;
  m.has_seed = true;
  m.add_input(a.data);
  if (!a.config.empty()) m.add_input(a.config);

  std::optional<Mesh> mesh;
  std::optional<FemTriple> fem;
  if (cfg.model == ModelKind::wgmrf) {
    if (a.mesh.empty()) throw InvalidArgument("the wgmrf model needs --mesh");
    mesh = load_mesh(a.mesh);
    check_mode(*mesh, data.mode);
    fem = fem_matrices(*mesh);
    m.add_input(a.mesh);
  }
  const fs::path dir = make_dir(a.out);
  const Fitted f = fit_model(cfg.model, cfg, data, mesh ? &*mesh : nullptr, fem ? &*fem : nullptr, io, "fit");

  json info = {{"model", model_name(cfg.model)}, {"mode", mode_name(data.mode)}, {"n_sites", data.size()}};
  switch (cfg.model) {
    case ModelKind::iid:
      save_iid(f.iid, dir);
      m.add_output(dir / "draws.csv");
      break;
    case ModelKind::lowrank:
      save_lowrank(f.lowrank, dir);
      m.add_output(dir / "draws.csv");
      m.add_output(dir / "knots.csv");
      m.add_output(dir / "W.bin");
      info["accept_phi"] = f.lowrank.accept_phi;
      break;
    case ModelKind::wgmrf:
      save_posterior(f.wgmrf, dir);
      save_mesh(*mesh, dir / "mesh.txt");
      m.add_output(dir / "draws.csv");
      m.add_output(dir / "eps_star.bin");
      m.add_output(dir / "mesh.txt");
      info["accept_psi"] = f.wgmrf.accept_psi;
      info["accept_r"] = f.wgmrf.accept_r;
      break;
  }
  std::ofstream(dir / "fit.json") << info.dump(2) << '\n';
  m.add_output(dir / "fit.json");
  m.config = cfg.to_json();
  m.write(dir / "manifest.json");
  io.out << "fitted " << model_name(cfg.model) << " on " << data.size() << " sites -> " << dir.string() << '\n';
}

struct LoadedFit {
  Fitted fitted;
  Mode mode = Mode::planar;
  std::optional<Mesh> mesh;
};

LoadedFit load_fit(const fs::path& dir) {
  std::ifstream in(dir / "fit.json");
  if (!in) throw InvalidArgument("not a fit directory (missing fit.json): " + dir.string());
  json info;
  try {
    info = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "fit.json").string(), 0, e.what());
  }
  LoadedFit l;
  l.fitted.model = parse_model(info.value("model", ""));
  l.mode = parse_mode(info.value("mode", "planar"));
  switch (l.fitted.model) {
    case ModelKind::iid: l.fitted.iid = load_iid(dir); break;
    case ModelKind::lowrank: l.fitted.lowrank = load_lowrank(dir); break;
    case ModelKind::wgmrf:
      l.fitted.wgmrf = load_posterior(dir);
      l.mesh = load_mesh(dir / "mesh.txt");
      break;
  }
  return l;
}

void cmd_predict(const std::string& fit_dir, const std::string& locations, const std::string& out,
                 const Streams& io) {
  const LoadedFit l = load_fit(fit_dir);
  const std::vector<Location> locs = read_locations(locations);
  if (locs.front().mode != l.mode) throw InvalidArgument("location mode does not match the fit");
  const auto pred = predict_fitted(l.fitted, l.mesh ? &*l.mesh : nullptr, locs);
  std::size_t undefined = 0;
  for (const auto& p : pred) undefined += p.direction_defined ? 0 : 1;
  if (undefined > 0)
    warn(io, std::to_string(undefined) + " site(s) have a vanishing predictive moment; direction written as 0");
  write_predictions(pred, l.mode, out);
  Manifest m;
  m.command = "predict";
  m.add_input(fs::path(fit_dir) / "fit.json");
  m.add_input(fs::path(fit_dir) / "draws.csv");
  m.add_input(locations);
  m.add_output(out);
  m.write(sidecar(out));
  io.out << "predicted " << pred.size() << " sites -> " << out << '\n';
}

void cmd_metrics(const std::string& pred_file, const std::string& obs_file, const std::string& out,
                 const std::string& units, const Streams& io) {
  const auto pred = read_predictions(pred_file);
  const Dataset obs = load_data(obs_file, dataset_options(units, true), io);
  if (pred.size() != obs.size())
    throw InvalidArgument("prediction and observation files have different row counts (" +
                          std::to_string(pred.size()) + " vs " + std::to_string(obs.size()) + ")");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& p = pred[i].location;
    const auto& o = obs.locations[i];
    if (p.mode != o.mode || std::abs(p.x - o.x) > 1e-9 || std::abs(p.y - o.y) > 1e-9)
      throw InvalidArgument("row " + std::to_string(i + 1) + ": prediction and observation sites differ");
  }
  const MetricsReport r = metrics_suite(pred, obs.angles);
  std::ostringstream csv;
  csv << "n," << metrics_header() << '\n' << r.n << ',' << metrics_row(r) << '\n';
  if (out.empty()) {
    io.out << csv.str();
  } else {
    std::ofstream f(out);
    if (!f) throw ResourceLimit("cannot write " + out);
    f << csv.str();
    Manifest m;
    m.command = "metrics";
    m.add_input(pred_file);
    m.add_input(obs_file);
    m.add_output(out);
    m.write(sidecar(out));
  }
}

struct CvArgs {
  std::string config, data, mesh, out, models, units = "auto";
  bool allow_duplicates = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations, burn_in, thin, knots, folds, block_rows, block_cols;
};

void cmd_cv(const CvArgs& a, const Streams& io) {
  RunConfig cfg = resolve(a.config, a.seed, a.iterations, a.burn_in, a.thin, a.knots);
  if (a.folds) cfg.folds = *a.folds;
  if (a.block_rows) cfg.block_rows = *a.block_rows;
  if (a.block_cols) cfg.block_cols = *a.block_cols;
  cfg.finalize();
  std::vector<ModelKind> models;
  if (a.models.empty()) {
    models.push_back(cfg.model);
  } else {
    std::stringstream ss(a.models);
    std::string tok;
    while (std::getline(ss, tok, ',')) models.push_back(parse_model(tok));
  }
  const Dataset data = load_data(a.data, dataset_options(a.units, a.allow_duplicates), io);

  Manifest man;
  man.command = "cv";
  man.seed = *cfg.seed;
  man.has_seed = true;
  man.add_input(a.data);
  if (!a.config.empty()) man.add_input(a.config);
  std::optional<Mesh> mesh;
  std::optional<FemTriple> fem;
  if (std::find(models.begin(), models.end(), ModelKind::wgmrf) != models.end()) {
    if (a.mesh.empty()) throw InvalidArgument("the wgmrf model needs --mesh");
    mesh = load_mesh(a.mesh);
    check_mode(*mesh, data.mode);
    fem = fem_matrices(*mesh);
    man.add_input(a.mesh);
  }

  const FoldAssignment folds = spatial_block_folds(data.locations, cfg.block_rows, cfg.block_cols, cfg.folds, *cfg.seed);
  for (const auto& w : folds.warnings) warn(io, w);
  const fs::path dir = make_dir(a.out);
  {
    std::ofstream f(dir / "folds.csv");
    f << "index,block,fold\n";
    for (std::size_t i = 0; i < folds.fold.size(); ++i) f << i << ',' << folds.block[i] << ',' << folds.fold[i] << '\n';
  }

  std::ofstream csv(dir / "cv_metrics.csv");
  if (!csv) throw ResourceLimit("cannot write cv_metrics.csv");
  csv << "model,fold,n_train,n_test," << metrics_header() << '\n';
  for (ModelKind model : models) {
    std::vector<MetricsReport> reports;
    for (int f = 1; f <= cfg.folds; ++f) {
      const auto test = folds.test_indices(f);
      if (test.empty()) {
        warn(io, std::string(model_name(model)) + " fold " + std::to_string(f) + " has no test sites; skipped");
        continue;
      }
      const auto train = folds.train_indices(f);
      const Dataset tr = data.subset(train);
      const Dataset te = data.subset(test);
      RunConfig fold_cfg = cfg;
      fold_cfg.seed = splitmix64(*cfg.seed + static_cast<std::uint64_t>(f));
      fold_cfg.finalize();
      resolve_delta(fold_cfg, tr.locations);
      const std::string label = std::string(model_name(model)) + " fold " + std::to_string(f);
      const Fitted fit = fit_model(model, fold_cfg, tr, mesh ? &*mesh : nullptr, fem ? &*fem : nullptr, io, label);
      const auto pred = predict_fitted(fit, mesh ? &*mesh : nullptr, te.locations);
      const MetricsReport r = metrics_suite(pred, te.angles);
      reports.push_back(r);
      csv << model_name(model) << ',' << f << ',' << train.size() << ',' << test.size() << ',' << metrics_row(r)
          << '\n';
      if (!io.quiet) io.err << label << ": " << metrics_row(r) << '\n';
    }
    if (reports.empty()) continue;
    // Cross-fold mean and standard error of the mean.
    const auto summarize = [&](auto get) {
      std::vector<double> v;
      for (const auto& r : reports)
        if (auto x = get(r)) v.push_back(*x);
      if (v.empty()) return std::pair<std::string, std::string>{"NA", "NA"};
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double se = v.size() > 1 ? std::sqrt(ss / (v.size() - 1) / v.size()) : 0.0;
      return std::pair<std::string, std::string>{fmt(mean), fmt(se)};
    };
    using Opt = std::optional<double>;
    const std::pair<std::string, std::string> cols[] = {
        summarize([](const MetricsReport& r) { return Opt(r.sc_rmse); }),
        summarize([](const MetricsReport& r) { return Opt(r.crmse); }),
        summarize([](const MetricsReport& r) { return Opt(r.cmae); }),
        summarize([](const MetricsReport& r) { return Opt(r.resultant_length); }),
        summarize([](const MetricsReport& r) { return r.circular_correlation; }),
        summarize([](const MetricsReport& r) { return Opt(r.avg_concentration); })};
    csv << model_name(model) << ",mean,,";
    for (const auto& c : cols) csv << ',' << c.first;
    csv << '\n' << model_name(model) << ",se,,";
    for (const auto& c : cols) csv << ',' << c.second;
    csv << '\n';
  }
  csv.close();
  man.config = cfg.to_json();
  json model_list = json::array();
  for (ModelKind k : models) model_list.push_back(model_name(k));
  man.config["cv"]["models"] = model_list;
  man.add_output(dir / "folds.csv");
  man.add_output(dir / "cv_metrics.csv");
  man.write(dir / "manifest.json");
  io.out << "cv: " << cfg.folds << " folds x " << models.size() << " model(s) -> " << (dir / "cv_metrics.csv").string()
         << '\n';
}

struct CorrelationArgs {
  std::string fit, probes, out;
  int max_probes = 200, max_draws = 0, bins = 30;
  double threshold = 0.05;
  bool normalize = false;
};

void cmd_correlation(const CorrelationArgs& a, const Streams& io) {
  const LoadedFit l = load_fit(a.fit);
  if (l.fitted.model != ModelKind::wgmrf) throw InvalidArgument("correlation curves need a wgmrf fit");
  std::vector<Location> all = read_locations(a.probes);
  if (a.max_probes < 2) throw InvalidArgument("--max-probes must be >= 2");
  std::vector<Location> probes;
  if (static_cast<int>(all.size()) > a.max_probes) {
    for (int k = 0; k < a.max_probes; ++k) probes.push_back(all[static_cast<std::size_t>(k) * all.size() / a.max_probes]);
  } else {
    probes = all;
  }
  const FemTriple fem = fem_matrices(*l.mesh);
  CorrelationOptions opt;
  opt.max_draws = a.max_draws;
  opt.normalize = a.normalize;
  const auto curve = circular_correlation_curve(l.fitted.wgmrf, fem, *l.mesh, probes, opt);
  double vmax = 0.0;
  for (const auto& c : curve) vmax = std::max({vmax, c.var_i, c.var_j});
  if (!a.normalize && vmax > 1.5)
    warn(io, "probe marginal variances reach " + fmt(vmax) +
                 "; the mesh extension is likely too small for the fitted psi (see --normalize)");
  std::ofstream f(a.out);
  if (!f) throw ResourceLimit("cannot write " + a.out);
  f << std::setprecision(10) << (l.mode == Mode::spherical ? "distance_km" : "distance")
    << ",rho_c_mean,rho_c_sd\n";
  for (const auto& c : curve) f << c.distance << ',' << c.rho_c_mean << ',' << c.rho_c_sd << '\n';
  f.close();
  const EffectiveRange range = effective_circular_range(curve, a.bins, a.threshold);
  if (range.determined) io.out << "effective_circular_range: " << range.distance << '\n';
  else io.out << "effective_circular_range: not reached within the probe distances\n";
  Manifest m;
  m.command = "correlation";
  m.config = {{"max_probes", a.max_probes}, {"max_draws", a.max_draws}, {"bins", a.bins},
              {"threshold", a.threshold}, {"normalize", a.normalize}};
  m.add_input(fs::path(a.fit) / "draws.csv");
  m.add_input(a.probes);
  m.add_output(a.out);
  m.write(sidecar(a.out));
}

struct EdaArgs {
  std::string data, out, units = "auto";
  bool allow_duplicates = false;
  int bins = 36;
  double max_dist = 0.0;
  std::size_t max_pairs = 2'000'000;
  std::uint64_t seed = 0;
};

void cmd_eda_hist(const EdaArgs& a, const Streams& io) {
  const Dataset d = load_data(a.data, dataset_options(a.units, a.allow_duplicates), io);
  const auto h = circular_histogram(d.angles, a.bins);
  std::ofstream f(a.out);
  if (!f) throw ResourceLimit("cannot write " + a.out);
  f << std::setprecision(10) << "bin_start,bin_end,count\n";
  for (const auto& b : h) f << b.start << ',' << b.end << ',' << b.count << '\n';
  f.close();
  Manifest m;
  m.command = "eda hist";
  m.config = {{"bins", a.bins}};
  m.add_input(a.data);
  m.add_output(a.out);
  m.write(sidecar(a.out));
}

void cmd_eda_variogram(const EdaArgs& a, const Streams& io) {
  const Dataset d = load_data(a.data, dataset_options(a.units, a.allow_duplicates), io);
  double max_dist = a.max_dist;
  if (max_dist <= 0.0) {
    const double diam = domain_diameter(d.locations);
    max_dist = 0.5 * (d.mode == Mode::spherical ? diam / kSphereRadiusDegrees * kEarthRadiusKm : diam);
  }
  VariogramOptions opt;
  opt.max_pairs = a.max_pairs;
  opt.seed = a.seed;
  const auto v = empirical_semivariogram_sincos(d.angles, d.locations, a.bins, max_dist, opt);
  std::ofstream f(a.out);
  if (!f) throw ResourceLimit("cannot write " + a.out);
  f << std::setprecision(10) << (d.mode == Mode::spherical ? "bin_center_km" : "bin_center")
    << ",gamma_sin,gamma_cos,pair_count\n";
  for (const auto& b : v) {
    f << b.center << ',';
    if (b.pairs > 0) f << b.gamma_sin << ',' << b.gamma_cos;
    else f << "NA,NA";
    f << ',' << b.pairs << '\n';
  }
  f.close();
  Manifest m;
  m.command = "eda variogram";
  m.seed = a.seed;
  m.has_seed = true;
  m.config = {{"bins", a.bins}, {"max_dist", max_dist}, {"max_pairs", a.max_pairs}};
  m.add_input(a.data);
  m.add_output(a.out);
  m.write(sidecar(a.out));
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::input: return kInputError;
    case Error::Category::numeric: return kNumericError;
    case Error::Category::resource: return kResourceError;
  }
  return kNumericError;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wrapped Gaussian Markov random field models for spatial directional data"};
  app.set_version_flag("--version", version());
  app.fallthrough();
  app.require_subcommand(1);
  Streams io{out, err};
  app.add_flag("-q,--quiet", io.quiet, "Suppress sampler progress on stderr");
  std::function<void()> action;

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a WGMRF dataset on a mesh");
  s->add_option("--mesh", sim.mesh, "Mesh file")->required();
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--preset", sim.preset, "Truth preset")->capture_default_str();
  s->add_option("--sites", sim.sites, "Number of uniformly placed sites");
  s->add_option("--grid", sim.grid, "Regular NX,NY grid of sites instead of --sites");
  s->add_option("--region", sim.region, "xmin,ymin,xmax,ymax (default: mesh bounding box)");
  s->add_option("--mu", sim.mu);
  s->add_option("--sigma2", sim.sigma2);
  s->add_option("--psi", sim.psi);
  s->add_option("--r", sim.r);
  s->callback([&] { action = [&] { cmd_simulate(sim, io); }; });

  auto* mesh_cmd = app.add_subcommand("mesh", "Build or inspect a triangulation");
  mesh_cmd->require_subcommand(1);
  MeshBuildArgs mb;
  auto* build = mesh_cmd->add_subcommand("build", "Build a planar grid mesh or a refined icosphere");
  build->add_option("--mode", mb.mode, "planar or spherical")->capture_default_str();
  build->add_option("--bbox", mb.bbox, "xmin,ymin,xmax,ymax (or lon/lat in spherical mode)");
  build->add_option("--data", mb.data, "Take the bounding box from a dataset");
  build->add_option("--edge", mb.edge, "Planar edge length");
  build->add_option("--extension", mb.extension, "Planar extension beyond the box")->capture_default_str();
  build->add_option("--subdivisions", mb.subdivisions, "Icosphere refinement level");
  build->add_option("--margin", mb.margin, "Spherical crop margin in degrees")->capture_default_str();
  build->add_option("--out", mb.out, "Mesh file")->required();
  build->callback([&] { action = [&] { cmd_mesh_build(mb, io); }; });
  std::string inspect_path;
  std::optional<double> inspect_psi;
  auto* inspect = mesh_cmd->add_subcommand("inspect", "Summarize a mesh file");
  inspect->add_option("mesh", inspect_path, "Mesh file")->required();
  inspect->add_option("--psi", inspect_psi, "Also report SPDE marginal variances at this range");
  inspect->callback([&] { action = [&] { cmd_mesh_inspect(inspect_path, inspect_psi, io); }; });

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Run a sampler and store the posterior draws");
  f->add_option("--config", fit.config, "JSON config");
  f->add_option("--data", fit.data, "Dataset CSV")->required();
  f->add_option("--mesh", fit.mesh, "Mesh file (wgmrf)");
  f->add_option("--model", fit.model, "iid, lowrank or wgmrf (overrides the config)");
  f->add_option("--out", fit.out, "Output directory")->required();
  f->add_option("--seed", fit.seed);
  f->add_option("--iterations", fit.iterations);
  f->add_option("--burn-in", fit.burn_in);
  f->add_option("--thin", fit.thin);
  f->add_option("--knots", fit.knots);
  f->add_option("--units", fit.units, "auto, radians or degrees")->capture_default_str();
  f->add_flag("--allow-duplicates", fit.allow_duplicates);
  f->callback([&] { action = [&] { cmd_fit(fit, io); }; });

  std::string pred_fit, pred_locs, pred_out;
  auto* p = app.add_subcommand("predict", "Circular kriging at new locations");
  p->add_option("--fit", pred_fit, "Fit directory")->required();
  p->add_option("--locations", pred_locs, "CSV headed lon,lat or x,y")->required();
  p->add_option("--out", pred_out, "Predictions CSV")->required();
  p->callback([&] { action = [&] { cmd_predict(pred_fit, pred_locs, pred_out, io); }; });

  CvArgs cv;
  auto* c = app.add_subcommand("cv", "Spatial-block cross-validation");
  c->add_option("--config", cv.config, "JSON config");
  c->add_option("--data", cv.data, "Dataset CSV")->required();
  c->add_option("--mesh", cv.mesh, "Mesh file (wgmrf)");
  c->add_option("--models", cv.models, "Comma-separated models (default: config model)");
  c->add_option("--out", cv.out, "Output directory")->required();
  c->add_option("--seed", cv.seed);
  c->add_option("--folds", cv.folds);
  c->add_option("--block-rows", cv.block_rows);
  c->add_option("--block-cols", cv.block_cols);
  c->add_option("--iterations", cv.iterations);
  c->add_option("--burn-in", cv.burn_in);
  c->add_option("--thin", cv.thin);
  c->add_option("--knots", cv.knots);
  c->add_option("--units", cv.units)->capture_default_str();
  c->add_flag("--allow-duplicates", cv.allow_duplicates);
  c->callback([&] { action = [&] { cmd_cv(cv, io); }; });

  std::string met_pred, met_obs, met_out, met_units = "auto";
  auto* m = app.add_subcommand("metrics", "Circular validation metrics of predictions against observations");
  m->add_option("--pred", met_pred, "Predictions CSV")->required();
  m->add_option("--obs", met_obs, "Dataset CSV with the same sites in the same order")->required();
  m->add_option("--out", met_out, "Output CSV (default: stdout)");
  m->add_option("--units", met_units)->capture_default_str();
  m->callback([&] { action = [&] { cmd_metrics(met_pred, met_obs, met_out, met_units, io); }; });

  CorrelationArgs corr;
  auto* cr = app.add_subcommand("correlation", "Posterior circular correlation between probe sites");
  cr->add_option("--fit", corr.fit, "wgmrf fit directory")->required();
  cr->add_option("--probes", corr.probes, "CSV headed lon,lat or x,y")->required();
  cr->add_option("--out", corr.out, "Curve CSV")->required();
  cr->add_option("--max-probes", corr.max_probes)->capture_default_str();
  cr->add_option("--max-draws", corr.max_draws, "0 uses every draw")->capture_default_str();
  cr->add_option("--bins", corr.bins)->capture_default_str();
  cr->add_option("--threshold", corr.threshold)->capture_default_str();
  cr->add_flag("--normalize", corr.normalize, "Divide by the marginal variances before the sinh transform");
  cr->callback([&] { action = [&] { cmd_correlation(corr, io); }; });

  auto* eda = app.add_subcommand("eda", "Exploratory summaries");
  eda->require_subcommand(1);
  EdaArgs hist;
  auto* h = eda->add_subcommand("hist", "Circular histogram");
  h->add_option("--data", hist.data)->required();
  h->add_option("--out", hist.out)->required();
  h->add_option("--bins", hist.bins)->capture_default_str();
  h->add_option("--units", hist.units)->capture_default_str();
  h->add_flag("--allow-duplicates", hist.allow_duplicates);
  h->callback([&] { action = [&] { cmd_eda_hist(hist, io); }; });
  EdaArgs vario;
  vario.bins = 15;
  auto* v = eda->add_subcommand("variogram", "Sine and cosine semivariograms");
  v->add_option("--data", vario.data)->required();
  v->add_option("--out", vario.out)->required();
  v->add_option("--bins", vario.bins)->capture_default_str();
  v->add_option("--max-dist", vario.max_dist, "km on the sphere (default: half the domain diameter)");
  v->add_option("--max-pairs", vario.max_pairs)->capture_default_str();
  v->add_option("--seed", vario.seed)->capture_default_str();
  v->add_option("--units", vario.units)->capture_default_str();
  v->add_flag("--allow-duplicates", vario.allow_duplicates);
  v->callback([&] { action = [&] { cmd_eda_variogram(vario, io); }; });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  try {
    if (action) action();
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kResourceError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  }
}

}  // namespace wgmrf::cli

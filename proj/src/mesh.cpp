#include "wgmrf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "wgmrf/errors.hpp"

namespace wgmrf {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Relative area below which a triangle counts as degenerate.
constexpr double kDegenerateArea = 1e-12;

std::optional<std::string> triangle_problem(const Triangle& t, int n) {
  for (int v : t)
    if (v < 0 || v >= n)
      return "node index " + std::to_string(v) + " out of range [0, " + std::to_string(n) + ")";
  if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return "degenerate triangle (repeated node index)";
  return std::nullopt;
}

Eigen::Vector3d embed(const Location& loc) {
  if (loc.mode == Mode::planar) return {loc.x, loc.y, 0.0};
  return kSphereRadiusDegrees * loc.unit_vector();
}

}  // namespace

const char* mode_name(Mode mode) noexcept { return mode == Mode::planar ? "planar" : "spherical"; }

Mode parse_mode(const std::string& name) {
  if (name == "planar") return Mode::planar;
  if (name == "spherical") return Mode::spherical;
  throw InvalidArgument("unknown mode '" + name + "' (expected planar or spherical)");
}

Location Location::planar(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) throw InvalidArgument("planar coordinates must be finite");
  return {Mode::planar, x, y};
}

Location Location::spherical(double lon, double lat) {
  if (!std::isfinite(lon) || !std::isfinite(lat))
    throw InvalidArgument("spherical coordinates must be finite");
  if (lon > 180.0 && lon <= 360.0) lon -= 360.0;
  if (lon < -180.0 || lon > 180.0)
    throw InvalidArgument("longitude " + std::to_string(lon) + " outside [-180, 180]");
  if (lat < -90.0 || lat > 90.0)
    throw InvalidArgument("latitude " + std::to_string(lat) + " outside [-90, 90]");
  return {Mode::spherical, lon, lat};
}

Eigen::Vector3d Location::unit_vector() const {
  if (mode == Mode::planar) return {x, y, 0.0};
  const double lo = x * kDegToRad;
  const double la = y * kDegToRad;
  return {std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
}

double geodesic_distance(const Location& p, const Location& q) {
  if (p.mode != q.mode) throw InvalidArgument("distance between locations of different modes");
  if (p.mode == Mode::planar) return std::hypot(p.x - q.x, p.y - q.y);
  const double dlat = (q.y - p.y) * kDegToRad;
  const double dlon = (q.x - p.x) * kDegToRad;
  const double s = std::sin(dlat / 2);
  const double t = std::sin(dlon / 2);
  const double h = s * s + std::cos(p.y * kDegToRad) * std::cos(q.y * kDegToRad) * t * t;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double BoundingBox::diagonal() const noexcept { return std::hypot(width(), height()); }

BoundingBox bounding_box(std::span<const Location> locations) {
  if (locations.empty()) throw InvalidArgument("bounding box of an empty location set");
  BoundingBox b{locations[0].x, locations[0].y, locations[0].x, locations[0].y};
  for (const auto& l : locations) {
    b.xmin = std::min(b.xmin, l.x);
    b.xmax = std::max(b.xmax, l.x);
    b.ymin = std::min(b.ymin, l.y);
    b.ymax = std::max(b.ymax, l.y);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Mesh

Mesh::Mesh(Mode mode, std::vector<Location> nodes, std::vector<Triangle> triangles)
    : mode_(mode), nodes_(std::move(nodes)), triangles_(std::move(triangles)) {
  positions_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].mode != mode_)
      throw InvalidArgument("node " + std::to_string(i) + " has a different mode than the mesh");
    positions_.push_back(embed(nodes_[i]));
  }
  const int n = num_nodes();
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    Triangle& tri = triangles_[t];
    if (auto problem = triangle_problem(tri, n))
      throw InvalidArgument("triangle " + std::to_string(t) + ": " + *problem);
    const Eigen::Vector3d& a = positions_[tri[0]];
    const Eigen::Vector3d& b = positions_[tri[1]];
    const Eigen::Vector3d& c = positions_[tri[2]];
    const Eigen::Vector3d normal = (b - a).cross(c - a);
    const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
    if (!(normal.norm() > kDegenerateArea * scale))
      throw InvalidArgument("triangle " + std::to_string(t) + ": degenerate triangle (zero area)");
    const double orient = mode_ == Mode::planar ? normal.z() : normal.dot(a + b + c);
    if (orient < 0.0) std::swap(tri[1], tri[2]);
  }
}

double Mesh::triangle_area(int t) const {
  const Triangle& tri = triangles_[t];
  const Eigen::Vector3d& a = positions_[tri[0]];
  return 0.5 * (positions_[tri[1]] - a).cross(positions_[tri[2]] - a).norm();
}

double Mesh::max_edge_length() const {
  double m = 0.0;
  for (const Triangle& t : triangles_)
    for (int e = 0; e < 3; ++e) m = std::max(m, (positions_[t[e]] - positions_[t[(e + 1) % 3]]).norm());
  return m;
}

Mesh build_planar_mesh(const BoundingBox& bbox, double edge, double extension) {
  if (!(edge > 0.0) || !std::isfinite(edge)) throw InvalidArgument("mesh edge length must be positive");
  if (!(extension >= 0.0) || !std::isfinite(extension))
    throw InvalidArgument("mesh extension must be non-negative");
  if (!(bbox.width() >= 0.0) || !(bbox.height() >= 0.0))
    throw InvalidArgument("bounding box has negative extent");
  if (edge > std::max(bbox.width(), bbox.height()))
    throw InvalidArgument("edge length exceeds the bounding-box extent");
  const double x0 = bbox.xmin - extension;
  const double y0 = bbox.ymin - extension;
  const double wx = bbox.width() + 2 * extension;
  const double wy = bbox.height() + 2 * extension;
  // Guard against 14 / 0.25 landing a hair above 56.
  auto cells = [edge](double w) { return std::max(1, static_cast<int>(std::ceil(w / edge - 1e-9))); };
  const int cx = cells(wx);
  const int cy = cells(wy);
  if (static_cast<double>(cx + 1) * (cy + 1) > 2e7) throw ResourceLimit("planar mesh would exceed 2e7 nodes");
  const int nx = cx + 1;
  const int ny = cy + 1;
  std::vector<Location> nodes;
  nodes.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      nodes.push_back({Mode::planar, x0 + wx * i / cx, y0 + wy * j / cy});
  std::vector<Triangle> tris;
  tris.reserve(2 * static_cast<std::size_t>(cx) * cy);
  for (int j = 0; j < cy; ++j)
    for (int i = 0; i < cx; ++i) {
      const int v00 = j * nx + i;
      const int v10 = v00 + 1;
      const int v01 = v00 + nx;
      const int v11 = v01 + 1;
      tris.push_back({v00, v10, v11});
      tris.push_back({v00, v11, v01});
    }
  return Mesh(Mode::planar, std::move(nodes), std::move(tris));
}

Mesh build_spherical_mesh(int subdivisions) {
  if (subdivisions < 0) throw InvalidArgument("subdivisions must be non-negative");
  if (subdivisions > 8) throw ResourceLimit("spherical mesh subdivisions limited to 8");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
      {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(4 * f.size());
    for (const Triangle& t : f) {
      const int ab = mid(t[0], t[1]);
      const int bc = mid(t[1], t[2]);
      const int ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  std::vector<Location> nodes;
  nodes.reserve(v.size());
  for (const auto& p : v) {
    const double lat = std::asin(std::clamp(p.z(), -1.0, 1.0)) / kDegToRad;
    const double lon = std::atan2(p.y(), p.x()) / kDegToRad;
    nodes.push_back({Mode::spherical, lon, lat});
  }
  return Mesh(Mode::spherical, std::move(nodes), std::move(f));
}

Mesh crop_mesh(const Mesh& mesh, const BoundingBox& box, double margin) {
  auto inside = [&](const Location& l) {
    return l.x >= box.xmin - margin && l.x <= box.xmax + margin && l.y >= box.ymin - margin &&
           l.y <= box.ymax + margin;
  };
  std::vector<int> remap(mesh.num_nodes(), -1);
  std::vector<Location> nodes;
  std::vector<Triangle> tris;
  for (const Triangle& t : mesh.triangles()) {
    if (!inside(mesh.nodes()[t[0]]) && !inside(mesh.nodes()[t[1]]) && !inside(mesh.nodes()[t[2]])) continue;
    Triangle nt{};
    for (int k = 0; k < 3; ++k) {
      int& r = remap[t[k]];
      if (r < 0) {
        r = static_cast<int>(nodes.size());
        nodes.push_back(mesh.nodes()[t[k]]);
      }
      nt[k] = r;
    }
    tris.push_back(nt);
  }
  if (tris.empty()) throw InvalidArgument("crop box contains no mesh triangles");
  return Mesh(mesh.mode(), std::move(nodes), std::move(tris));
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open mesh file " + path.string());
  const std::string src = path.string();
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(src, line_no, "empty mesh file");
  std::istringstream hs(line);
  std::string mode_str;
  long long n = -1;
  long long t = -1;
  if (!(hs >> mode_str >> n >> t) || n < 3 || t < 1)
    throw ParseError(src, line_no, "expected header `mode N T`");
  Mode mode;
  try {
    mode = parse_mode(mode_str);
  } catch (const InvalidArgument& e) {
    throw ParseError(src, line_no, e.what());
  }
  std::vector<Location> nodes;
  nodes.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    if (!next_line()) throw ParseError(src, line_no, "unexpected end of file in node list");
    std::istringstream ls(line);
    double a = 0.0;
    double b = 0.0;
    std::string extra;
    if (!(ls >> a >> b) || (ls >> extra)) throw ParseError(src, line_no, "expected two node coordinates");
    try {
      nodes.push_back(mode == Mode::planar ? Location::planar(a, b) : Location::spherical(a, b));
    } catch (const InvalidArgument& e) {
      throw ParseError(src, line_no, e.what());
    }
  }
  std::vector<Triangle> tris;
  tris.reserve(static_cast<std::size_t>(t));
  std::vector<std::size_t> tri_lines;
  for (long long k = 0; k < t; ++k) {
    if (!next_line()) throw ParseError(src, line_no, "unexpected end of file in triangle list");
    std::istringstream ls(line);
    long long a = 0;
    long long b = 0;
    long long c = 0;
    std::string extra;
    if (!(ls >> a >> b >> c) || (ls >> extra)) throw ParseError(src, line_no, "expected three node indices");
    const auto big = std::numeric_limits<int>::max();
    if (a > big || b > big || c > big) throw ParseError(src, line_no, "node index out of range");
    const Triangle tri{static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)};
    if (auto problem = triangle_problem(tri, static_cast<int>(n))) throw ParseError(src, line_no, *problem);
    tris.push_back(tri);
    tri_lines.push_back(line_no);
  }
  if (next_line()) throw ParseError(src, line_no, "trailing content after the triangle list");
  try {
    return Mesh(mode, std::move(nodes), std::move(tris));
  } catch (const InvalidArgument& e) {
    // Geometric failures name the triangle; map it back to its line.
    const std::string what = e.what();
    std::size_t idx = 0;
    if (std::sscanf(what.c_str(), "triangle %zu", &idx) == 1 && idx < tri_lines.size())
      throw ParseError(src, tri_lines[idx], what);
    throw ParseError(src, line_no, what);
  }
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write mesh file " + path.string());
  out.precision(17);
  out << mode_name(mesh.mode()) << ' ' << mesh.num_nodes() << ' ' << mesh.num_triangles() << '\n';
  for (const auto& l : mesh.nodes()) out << l.x << ' ' << l.y << '\n';
  for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

// ---------------------------------------------------------------------------
// FEM assembly

FemTriple fem_matrices(const Mesh& mesh) {
  const int n = mesh.num_nodes();
  if (n == 0) throw InvalidArgument("empty mesh");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangles()[t];
    const Eigen::Vector3d& p0 = mesh.position(tri[0]);
    const Eigen::Vector3d& p1 = mesh.position(tri[1]);
    const Eigen::Vector3d& p2 = mesh.position(tri[2]);
    // Edge opposite each vertex.
    const Eigen::Vector3d e[3] = {p2 - p1, p0 - p2, p1 - p0};
    const double area = 0.5 * e[2].cross(-e[1]).norm();
    for (int a = 0; a < 3; ++a) {
      d[tri[a]] += area / 3.0;
      for (int b = 0; b < 3; ++b) trip.emplace_back(tri[a], tri[b], e[a].dot(e[b]) / (4.0 * area));
    }
  }
  for (int i = 0; i < n; ++i)
    if (!(d[i] > 0.0)) throw InvalidArgument("mesh node " + std::to_string(i) + " belongs to no triangle");

  Eigen::SparseMatrix<double> g1(n, n);
  g1.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd d_inv = d.cwiseInverse();
  const Eigen::SparseMatrix<double> g2 = (g1 * d_inv.asDiagonal() * g1).pruned(0.0, 0.0);

  auto lower = [n](const Eigen::SparseMatrix<double>& m) {
    std::vector<SparseSymmetric::Entry> e;
    e.reserve(static_cast<std::size_t>(m.nonZeros() / 2 + n));
    for (int j = 0; j < m.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(m, j); it; ++it)
        if (it.row() >= j) e.push_back({static_cast<int>(it.row()), j, it.value()});
    return SparseSymmetric::from_entries(n, e);
  };

  FemTriple fem;
  fem.D = d;
  fem.G1 = lower(g1);
  fem.G2 = lower(g2);
  fem.pattern = SparseSymmetric::pattern_union(fem.G1, fem.G2);
  fem.g1_values = fem.G1.embed_into(fem.pattern);
  fem.g2_values = fem.G2.embed_into(fem.pattern);
  fem.d_values.assign(fem.pattern.nnz(), 0.0);
  const auto ptr = fem.pattern.col_ptr();
  for (int j = 0; j < n; ++j) fem.d_values[ptr[j]] = d[j];
  return fem;
}

void spde_precision_into(const FemTriple& fem, double psi, SparseSymmetric& q) {
  if (!(psi > 0.0) || !std::isfinite(psi)) throw InvalidArgument("range parameter psi must be positive");
  if (!q.same_pattern(fem.pattern)) throw InvalidArgument("precision target does not carry the FEM pattern");
  const double a = 1.0 / (psi * psi * 4.0 * std::numbers::pi);
  const double b = 2.0 / (4.0 * std::numbers::pi);
  const double c = psi * psi / (4.0 * std::numbers::pi);
  auto v = q.values();
  for (std::size_t p = 0; p < v.size(); ++p)
    v[p] = a * fem.d_values[p] + b * fem.g1_values[p] + c * fem.g2_values[p];
}

SparseSymmetric spde_precision(const FemTriple& fem, double psi) {
  SparseSymmetric q = fem.pattern;
  spde_precision_into(fem, psi, q);
  return q;
}

// ---------------------------------------------------------------------------
// Projection

ProjectionMatrix::ProjectionMatrix(int cols, std::vector<std::array<int, 3>> idx,
                                   std::vector<std::array<double, 3>> weights)
    : cols_(cols), idx_(std::move(idx)), w_(std::move(weights)) {
  if (idx_.size() != w_.size()) throw InvalidArgument("projection index and weight rows differ");
  for (const auto& r : idx_)
    for (int c : r)
      if (c < 0 || c >= cols_) throw InvalidArgument("projection column out of range");
}

Eigen::VectorXd ProjectionMatrix::apply(const Eigen::VectorXd& x) const {
  if (x.size() != cols_) throw InvalidArgument("projection input length mismatch");
  Eigen::VectorXd y(rows());
  for (int i = 0; i < rows(); ++i) y[i] = row_dot(i, x);
  return y;
}

Eigen::VectorXd ProjectionMatrix::apply_transpose(const Eigen::VectorXd& v) const {
  if (v.size() != rows()) throw InvalidArgument("projection transpose input length mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(cols_);
  for (int i = 0; i < rows(); ++i)
    for (int k = 0; k < 3; ++k) y[idx_[i][k]] += w_[i][k] * v[i];
  return y;
}

std::vector<double> ProjectionMatrix::gram_values(const SparseSymmetric& pattern) const {
  if (pattern.dimension() != cols_) throw InvalidArgument("gram pattern dimension mismatch");
  std::vector<double> out(pattern.nnz(), 0.0);
  const auto ptr = pattern.col_ptr();
  const auto rows_idx = pattern.row_idx();
  auto slot = [&](int r, int c) {
    const auto begin = rows_idx.begin() + ptr[c];
    const auto end = rows_idx.begin() + ptr[c + 1];
    const auto it = std::lower_bound(begin, end, r);
    if (it == end || *it != r) throw InvalidArgument("gram pattern lacks a projection vertex pair");
    return static_cast<std::size_t>(it - rows_idx.begin());
  };
  for (int i = 0; i < rows(); ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b <= a; ++b) {
        const int na = idx_[i][a];
        const int nb = idx_[i][b];
        const double w = w_[i][a] * w_[i][b];
        if (w == 0.0) continue;
        out[slot(std::max(na, nb), std::min(na, nb))] += w;
      }
  return out;
}

Eigen::SparseMatrix<double> ProjectionMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(3 * idx_.size());
  for (int i = 0; i < rows(); ++i)
    for (int k = 0; k < 3; ++k)
      if (w_[i][k] != 0.0) t.emplace_back(i, idx_[i][k], w_[i][k]);
  Eigen::SparseMatrix<double> a(rows(), cols_);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

namespace {

// Uniform grid of buckets over the embedded triangles' bounding boxes.
class Locator {
 public:
  explicit Locator(const Mesh& mesh) : mesh_(mesh) {
    const int nt = mesh.num_triangles();
    std::vector<Eigen::AlignedBox3d> boxes(nt);
    const bool sphere = mesh.mode() == Mode::spherical;
    for (int t = 0; t < nt; ++t) {
      const Triangle& tri = mesh.triangles()[t];
      Eigen::AlignedBox3d b;
      double longest = 0.0;
      for (int k = 0; k < 3; ++k) {
        b.extend(mesh.position(tri[k]));
        longest = std::max(longest, (mesh.position(tri[k]) - mesh.position(tri[(k + 1) % 3])).norm());
      }
      // The spherical cap bulges past the flat triangle by at most its sagitta.
      const double pad = sphere ? longest * longest / kSphereRadiusDegrees : 0.0;
      const double eps = 1e-9 * (1.0 + longest);
      b.min().array() -= pad + eps;
      b.max().array() += pad + eps;
      boxes[t] = b;
      all_.extend(b);
    }
    const Eigen::Vector3d extent = all_.sizes();
    int dims = 0;
    for (int k = 0; k < (sphere ? 3 : 2); ++k) dims += extent[k] > 0 ? 1 : 0;
    const double target = std::max(1.0, static_cast<double>(nt) / 2.0);
    const double per_axis = sphere ? std::sqrt(target / 6.0) * 2.0 : std::pow(target, 1.0 / std::max(1, dims));
    for (int k = 0; k < 3; ++k) {
      const bool flat_axis = !sphere && k == 2;
      n_[k] = extent[k] > 0 && !flat_axis ? std::clamp(static_cast<int>(std::ceil(per_axis)), 1, 2048) : 1;
      cell_[k] = extent[k] > 0 ? extent[k] / n_[k] : 1.0;
    }
    std::vector<int> counts(static_cast<std::size_t>(n_[0]) * n_[1] * n_[2] + 1, 0);
    auto for_cells = [&](const Eigen::AlignedBox3d& b, auto&& fn) {
      int lo[3];
      int hi[3];
      for (int k = 0; k < 3; ++k) {
        lo[k] = cell_index(b.min()[k], k);
        hi[k] = cell_index(b.max()[k], k);
      }
      for (int i = lo[0]; i <= hi[0]; ++i)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int l = lo[2]; l <= hi[2]; ++l) fn(flat(i, j, l));
    };
    for (int t = 0; t < nt; ++t) for_cells(boxes[t], [&](std::size_t c) { ++counts[c + 1]; });
    for (std::size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
    start_ = counts;
    items_.resize(static_cast<std::size_t>(counts.back()));
    for (int t = 0; t < nt; ++t) for_cells(boxes[t], [&](std::size_t c) { items_[counts[c]++] = t; });
  }

  // Returns the containing triangle and clamped barycentric weights.
  std::optional<std::pair<int, std::array<double, 3>>> locate(const Location& loc) const {
    const Eigen::Vector3d p = embed(loc);
    for (int k = 0; k < 3; ++k)
      if (p[k] < all_.min()[k] || p[k] > all_.max()[k]) return std::nullopt;
    const std::size_t c = flat(cell_index(p[0], 0), cell_index(p[1], 1), cell_index(p[2], 2));
    int best = -1;
    double best_min = -1e-10;
    std::array<double, 3> best_w{};
    for (int s = start_[c]; s < start_[c + 1]; ++s) {
      const int t = items_[s];
      const auto w = barycentric(t, p);
      if (!w) continue;
      const double m = std::min({(*w)[0], (*w)[1], (*w)[2]});
      if (m > best_min) {
        best_min = m;
        best = t;
        best_w = *w;
      }
    }
    if (best < 0) return std::nullopt;
    double sum = 0.0;
    for (double& w : best_w) {
      w = std::max(0.0, w);
      sum += w;
    }
    for (double& w : best_w) w /= sum;
    return std::make_pair(best, best_w);
  }

 private:
  int cell_index(double v, int k) const {
    const int i = static_cast<int>(std::floor((v - all_.min()[k]) / cell_[k]));
    return std::clamp(i, 0, n_[k] - 1);
  }
  std::size_t flat(int i, int j, int l) const {
    return (static_cast<std::size_t>(l) * n_[1] + j) * n_[0] + i;
  }

  std::optional<std::array<double, 3>> barycentric(int t, const Eigen::Vector3d& p) const {
    const Triangle& tri = mesh_.triangles()[t];
    const Eigen::Vector3d& a = mesh_.position(tri[0]);
    const Eigen::Vector3d& b = mesh_.position(tri[1]);
    const Eigen::Vector3d& c = mesh_.position(tri[2]);
    if (mesh_.mode() == Mode::planar) {
      const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
      const double lb = ((p.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (p.y() - a.y())) / det;
      const double lc = ((b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y())) / det;
      return std::array<double, 3>{1.0 - lb - lc, lb, lc};
    }
    // Gnomonic: barycentric coordinates of the ray through p hitting the
    // triangle's plane.
    const double la = p.dot(b.cross(c));
    const double lb = a.dot(p.cross(c));
    const double lc = a.dot(b.cross(p));
    const double s = la + lb + lc;
    if (!(s > 0.0)) return std::nullopt;
    return std::array<double, 3>{la / s, lb / s, lc / s};
  }

  const Mesh& mesh_;
  Eigen::AlignedBox3d all_;
  int n_[3] = {1, 1, 1};
  double cell_[3] = {1.0, 1.0, 1.0};
  std::vector<int> start_;
  std::vector<int> items_;
};

}  // namespace

ProjectionMatrix projection(const Mesh& mesh, std::span<const Location> locations) {
  if (mesh.num_triangles() == 0) throw InvalidArgument("projection onto an empty mesh");
  const Locator locator(mesh);
  std::vector<std::array<int, 3>> idx(locations.size());
  std::vector<std::array<double, 3>> w(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (locations[i].mode != mesh.mode())
      throw InvalidArgument("location " + std::to_string(i) + " mode differs from the mesh mode");
    const auto hit = locator.locate(locations[i]);
    if (!hit)
      throw OutOfDomain(i, "location " + std::to_string(i) + " (" + std::to_string(locations[i].x) + ", " +
                               std::to_string(locations[i].y) + ") lies outside the mesh");
    idx[i] = mesh.triangles()[hit->first];
    w[i] = hit->second;
  }
  return ProjectionMatrix(mesh.num_nodes(), std::move(idx), std::move(w));
}

Eigen::VectorXd marginal_variance_diagnostic(const Mesh& mesh, const FemTriple& fem, double psi,
                                             std::span<const Location> probes) {
  const ProjectionMatrix a = projection(mesh, probes);
  const CholeskyFactor factor = factorize(spde_precision(fem, psi));
  Eigen::VectorXd out(a.rows());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int i = 0; i < a.rows(); ++i) {
    const auto& nodes = a.row_nodes(i);
    const auto& w = a.row_weights(i);
    for (int k = 0; k < 3; ++k) e[nodes[k]] += w[k];
    out[i] = e.dot(factor.solve(e));
    for (int k = 0; k < 3; ++k) e[nodes[k]] = 0.0;
  }
  return out;
}

}  // namespace wgmrf

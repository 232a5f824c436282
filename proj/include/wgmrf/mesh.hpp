#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "wgmrf/sparse.hpp"

namespace wgmrf {

enum class Mode { planar, spherical };

const char* mode_name(Mode mode) noexcept;
Mode parse_mode(const std::string& name);

inline constexpr double kEarthRadiusKm = 6371.0;
/// Spherical meshes live on a sphere of this radius so that FEM lengths (and
/// therefore psi) are measured in degrees of arc.
inline constexpr double kSphereRadiusDegrees = 180.0 / std::numbers::pi;

/// A site: planar (x, y) or spherical (longitude, latitude) in degrees.
struct Location {
  Mode mode = Mode::planar;
  double x = 0.0;
  double y = 0.0;

  static Location planar(double x, double y);
  /// Validates lon in [-180, 180] (360 is folded) and lat in [-90, 90].
  static Location spherical(double lon, double lat);

  double lon() const noexcept { return x; }
  double lat() const noexcept { return y; }
  /// Unit vector for spherical locations, (x, y, 0) for planar ones.
  Eigen::Vector3d unit_vector() const;
};

/// Great-circle distance in km (spherical) or Euclidean distance (planar).
double geodesic_distance(const Location& p, const Location& q);

struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const noexcept { return xmax - xmin; }
  double height() const noexcept { return ymax - ymin; }
  double diagonal() const noexcept;
};

BoundingBox bounding_box(std::span<const Location> locations);

using Triangle = std::array<int, 3>;

/// Triangulated domain. Triangles are reoriented on construction
/// (counterclockwise in the plane, outward normal on the sphere) and
/// degenerate or out-of-range triangles are rejected.
class Mesh {
 public:
  Mesh() = default;
  Mesh(Mode mode, std::vector<Location> nodes, std::vector<Triangle> triangles);

  Mode mode() const noexcept { return mode_; }
  int num_nodes() const noexcept { return static_cast<int>(nodes_.size()); }
  int num_triangles() const noexcept { return static_cast<int>(triangles_.size()); }

  const std::vector<Location>& nodes() const noexcept { return nodes_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }

  /// Node position in the FEM embedding space: (x, y, 0) in planar mode,
  /// a point on the sphere of radius kSphereRadiusDegrees otherwise.
  const Eigen::Vector3d& position(int node) const { return positions_[node]; }

  double triangle_area(int t) const;
  double max_edge_length() const;

 private:
  Mode mode_ = Mode::planar;
  std::vector<Location> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<Eigen::Vector3d> positions_;
};

/// Structured grid over the box grown by `extension` on every side, each cell
/// split along its lower-left to upper-right diagonal.
Mesh build_planar_mesh(const BoundingBox& bbox, double edge, double extension);

/// Icosahedron refined `subdivisions` times.
Mesh build_spherical_mesh(int subdivisions);

/// Keeps the triangles having at least one vertex inside `box` grown by
/// `margin`, renumbering the surviving nodes.
Mesh crop_mesh(const Mesh& mesh, const BoundingBox& box, double margin);

Mesh load_mesh(const std::filesystem::path& path);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

/// Lumped mass D, stiffness G1 and G2 = G1 D^{-1} G1, plus the values of all
/// three embedded in the common pattern of the SPDE precision.
struct FemTriple {
  Eigen::VectorXd D;
  SparseSymmetric G1;
  SparseSymmetric G2;

  SparseSymmetric pattern;
  std::vector<double> d_values;
  std::vector<double> g1_values;
  std::vector<double> g2_values;
};

FemTriple fem_matrices(const Mesh& mesh);

/// Q = (D / psi^2 + 2 G1 + psi^2 G2) / (4 pi).
SparseSymmetric spde_precision(const FemTriple& fem, double psi);
/// Overwrites the values of `q`, which must carry fem.pattern.
void spde_precision_into(const FemTriple& fem, double psi, SparseSymmetric& q);

/// Observation matrix: row i holds the barycentric weights of location i at
/// the three vertices of its containing triangle.
class ProjectionMatrix {
 public:
  ProjectionMatrix() = default;
  ProjectionMatrix(int cols, std::vector<std::array<int, 3>> idx,
                   std::vector<std::array<double, 3>> weights);

  int rows() const noexcept { return static_cast<int>(idx_.size()); }
  int cols() const noexcept { return cols_; }
  const std::array<int, 3>& row_nodes(int i) const { return idx_[i]; }
  const std::array<double, 3>& row_weights(int i) const { return w_[i]; }

  /// A x.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// A^T v.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const;
  double row_dot(int i, const Eigen::VectorXd& x) const {
    const auto& n = idx_[i];
    const auto& w = w_[i];
    return w[0] * x[n[0]] + w[1] * x[n[1]] + w[2] * x[n[2]];
  }
  /// A^T A on the given pattern (which must contain every vertex pair of a
  /// row); returns values aligned with pattern.values().
  std::vector<double> gram_values(const SparseSymmetric& pattern) const;
  Eigen::SparseMatrix<double> to_eigen() const;

 private:
  int cols_ = 0;
  std::vector<std::array<int, 3>> idx_;
  std::vector<std::array<double, 3>> w_;
};

ProjectionMatrix projection(const Mesh& mesh, std::span<const Location> locations);

/// Diagonal of A Q^{-1} A^T at the probes.
Eigen::VectorXd marginal_variance_diagnostic(const Mesh& mesh, const FemTriple& fem, double psi,
                                             std::span<const Location> probes);

}  // namespace wgmrf

#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace wgmrf {

/// Symmetric matrix stored as its lower triangle in compressed-column form.
/// Row indices are strictly increasing within each column and every
/// diagonal entry is structurally present.
class SparseSymmetric {
 public:
  struct Entry {
    int row;
    int col;
    double value;
  };

  SparseSymmetric() = default;

  /// Builds from (row, col, value) entries. Entries above the diagonal are
  /// mirrored into the lower triangle and duplicates are summed; missing
  /// diagonal entries are inserted as explicit zeros.
  static SparseSymmetric from_entries(int n, std::span<const Entry> entries);

  /// Builds from already-compressed lower-triangle arrays (validated).
  SparseSymmetric(int n, std::vector<int> col_ptr, std::vector<int> row_idx,
                  std::vector<double> values);

  int dimension() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return row_idx_.size(); }

  std::span<const int> col_ptr() const noexcept { return col_ptr_; }
  std::span<const int> row_idx() const noexcept { return row_idx_; }
  std::span<const double> values() const noexcept { return values_; }
  /// Mutable values on the fixed pattern.
  std::span<double> values() noexcept { return values_; }

  bool same_pattern(const SparseSymmetric& other) const noexcept;

  /// Value of entry (i, j), zero when not stored.
  double coeff(int i, int j) const;
  double diagonal(int i) const;

  /// y = Q x using the implied symmetry.
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  double quadratic_form(const Eigen::VectorXd& x) const;

  double max_abs() const;
  Eigen::MatrixXd to_dense() const;
  Eigen::SparseMatrix<double> to_eigen_full() const;

  /// Values of this matrix scattered onto `pattern`, which must contain this
  /// matrix's pattern.
  std::vector<double> embed_into(const SparseSymmetric& pattern) const;

  /// Pattern union of two matrices of equal dimension, all values zero.
  static SparseSymmetric pattern_union(const SparseSymmetric& a, const SparseSymmetric& b);

 private:
  int n_ = 0;
  std::vector<int> col_ptr_{0};
  std::vector<int> row_idx_;
  std::vector<double> values_;
};

/// Coordinate text format: header `n nnz`, then `row col value` lines with
/// 0-based indices, lower triangle only.
SparseSymmetric read_triplets(const std::filesystem::path& path);
void write_triplets(const SparseSymmetric& q, const std::filesystem::path& path);

enum class Ordering { amd, natural };

/// Sparse Cholesky factor P Q P^T = L L^T of a symmetric positive-definite
/// matrix. The symbolic analysis (ordering, elimination tree, pattern of L)
/// is computed once and reused by refactorize() for any matrix with the
/// same sparsity pattern.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  static CholeskyFactor factorize(const SparseSymmetric& q, Ordering ordering = Ordering::amd);

  /// Numeric refactorization on the stored symbolic analysis.
  void refactorize(const SparseSymmetric& q);

  int dimension() const noexcept { return n_; }
  std::size_t factor_nnz() const noexcept { return l_idx_.size(); }
  /// perm[k] is the original index eliminated k-th.
  std::span<const int> permutation() const noexcept { return perm_; }

  double log_det() const noexcept { return log_det_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  /// Draw from N(Q^{-1} b, Q^{-1}) given a standard-normal vector z.
  Eigen::VectorXd sample_with_noise(const Eigen::VectorXd& b, const Eigen::VectorXd& z) const;

  /// L as a dense matrix in permuted order (tests and diagnostics).
  Eigen::MatrixXd dense_factor() const;

 private:
  void analyze(const SparseSymmetric& q, Ordering ordering);
  void numeric(const SparseSymmetric& q);
  void apply_lt_inverse(Eigen::VectorXd& y) const;
  void apply_l_inverse(Eigen::VectorXd& y) const;

  int n_ = 0;
  std::vector<int> perm_;
  std::vector<int> pinv_;
  std::vector<int> parent_;
  // Permuted upper triangle C = P Q P^T and the map Q value -> C value.
  std::vector<int> c_ptr_;
  std::vector<int> c_idx_;
  std::vector<int> value_map_;
  // Pattern of the originating matrix for refactorize checks.
  std::vector<int> q_ptr_;
  std::vector<int> q_idx_;
  // Factor columns, diagonal first.
  std::vector<int> l_ptr_;
  std::vector<int> l_idx_;
  std::vector<double> l_val_;
  double log_det_ = 0.0;
};

inline CholeskyFactor factorize(const SparseSymmetric& q, Ordering ordering = Ordering::amd) {
  return CholeskyFactor::factorize(q, ordering);
}

CholeskyFactor refactorize(CholeskyFactor factor, const SparseSymmetric& q);

/// Draw x ~ N(P^{-1} b, P^{-1}) where `factor` factors the precision P.
template <typename Rng>
Eigen::VectorXd sample_canonical(const CholeskyFactor& factor, const Eigen::VectorXd& b, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(factor.dimension());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return factor.sample_with_noise(b, z);
}

}  // namespace wgmrf

#include "wgmrf/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <Eigen/OrderingMethods>

#include "wgmrf/errors.hpp"

namespace wgmrf {

// ---------------------------------------------------------------------------
// SparseSymmetric

SparseSymmetric SparseSymmetric::from_entries(int n, std::span<const Entry> entries) {
  if (n < 0) throw InvalidArgument("matrix dimension must be non-negative");
  std::vector<Entry> lower;
  lower.reserve(entries.size() + static_cast<std::size_t>(n));
  for (const Entry& e : entries) {
    if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= n)
      throw InvalidArgument("entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                            ") outside a " + std::to_string(n) + "x" + std::to_string(n) +
                            " matrix");
    if (e.row >= e.col)
      lower.push_back(e);
    else
      lower.push_back({e.col, e.row, e.value});
  }
  for (int i = 0; i < n; ++i) lower.push_back({i, i, 0.0});
  std::sort(lower.begin(), lower.end(), [](const Entry& a, const Entry& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });

  std::vector<int> col_ptr(n + 1, 0);
  std::vector<int> row_idx;
  std::vector<double> values;
  row_idx.reserve(lower.size());
  values.reserve(lower.size());
  for (std::size_t p = 0; p < lower.size();) {
    const Entry& head = lower[p];
    double sum = 0.0;
    std::size_t q = p;
    for (; q < lower.size() && lower[q].row == head.row && lower[q].col == head.col; ++q)
      sum += lower[q].value;
    row_idx.push_back(head.row);
    values.push_back(sum);
    ++col_ptr[head.col + 1];
    p = q;
  }
  std::partial_sum(col_ptr.begin(), col_ptr.end(), col_ptr.begin());
  return SparseSymmetric(n, std::move(col_ptr), std::move(row_idx), std::move(values));
}

SparseSymmetric::SparseSymmetric(int n, std::vector<int> col_ptr, std::vector<int> row_idx,
                                 std::vector<double> values)
    : n_(n), col_ptr_(std::move(col_ptr)), row_idx_(std::move(row_idx)), values_(std::move(values)) {
  if (n_ < 0) throw InvalidArgument("matrix dimension must be non-negative");
  if (col_ptr_.size() != static_cast<std::size_t>(n_) + 1 || col_ptr_.front() != 0 ||
      static_cast<std::size_t>(col_ptr_.back()) != row_idx_.size() ||
      row_idx_.size() != values_.size())
    throw InvalidArgument("inconsistent compressed-column arrays");
  for (int j = 0; j < n_; ++j) {
    const int begin = col_ptr_[j];
    const int end = col_ptr_[j + 1];
    if (end < begin) throw InvalidArgument("column pointers must be non-decreasing");
    if (begin == end || row_idx_[begin] != j)
      throw InvalidArgument("diagonal entry missing in column " + std::to_string(j));
    for (int p = begin + 1; p < end; ++p) {
      if (row_idx_[p] <= row_idx_[p - 1] || row_idx_[p] >= n_)
        throw InvalidArgument("row indices must be strictly increasing within column " +
                              std::to_string(j));
    }
  }
}

bool SparseSymmetric::same_pattern(const SparseSymmetric& other) const noexcept {
  return n_ == other.n_ && col_ptr_ == other.col_ptr_ && row_idx_ == other.row_idx_;
}

double SparseSymmetric::coeff(int i, int j) const {
  if (i < j) std::swap(i, j);
  if (j < 0 || i >= n_) throw InvalidArgument("coefficient index out of range");
  const auto begin = row_idx_.begin() + col_ptr_[j];
  const auto end = row_idx_.begin() + col_ptr_[j + 1];
  const auto it = std::lower_bound(begin, end, i);
  if (it == end || *it != i) return 0.0;
  return values_[static_cast<std::size_t>(it - row_idx_.begin())];
}

double SparseSymmetric::diagonal(int i) const { return values_[col_ptr_[i]]; }

Eigen::VectorXd SparseSymmetric::multiply(const Eigen::VectorXd& x) const {
  if (x.size() != n_) throw InvalidArgument("vector length does not match matrix dimension");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_);
  for (int j = 0; j < n_; ++j) {
    const double xj = x[j];
    double acc = 0.0;
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      const int i = row_idx_[p];
      const double v = values_[p];
      y[i] += v * xj;
      if (i != j) acc += v * x[i];
    }
    y[j] += acc;
  }
  return y;
}

double SparseSymmetric::quadratic_form(const Eigen::VectorXd& x) const {
  if (x.size() != n_) throw InvalidArgument("vector length does not match matrix dimension");
  double diag = 0.0;
  double off = 0.0;
  for (int j = 0; j < n_; ++j) {
    const int p0 = col_ptr_[j];
    diag += values_[p0] * x[j] * x[j];
    double acc = 0.0;
    for (int p = p0 + 1; p < col_ptr_[j + 1]; ++p) acc += values_[p] * x[row_idx_[p]];
    off += acc * x[j];
  }
  return diag + 2.0 * off;
}

double SparseSymmetric::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

Eigen::MatrixXd SparseSymmetric::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
  for (int j = 0; j < n_; ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      d(row_idx_[p], j) = values_[p];
      d(j, row_idx_[p]) = values_[p];
    }
  return d;
}

Eigen::SparseMatrix<double> SparseSymmetric::to_eigen_full() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * nnz());
  for (int j = 0; j < n_; ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      t.emplace_back(row_idx_[p], j, values_[p]);
      if (row_idx_[p] != j) t.emplace_back(j, row_idx_[p], values_[p]);
    }
  Eigen::SparseMatrix<double> m(n_, n_);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

std::vector<double> SparseSymmetric::embed_into(const SparseSymmetric& pattern) const {
  if (pattern.n_ != n_) throw InvalidArgument("embedding requires equal dimensions");
  std::vector<double> out(pattern.nnz(), 0.0);
  for (int j = 0; j < n_; ++j) {
    int q = pattern.col_ptr_[j];
    const int q_end = pattern.col_ptr_[j + 1];
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      while (q < q_end && pattern.row_idx_[q] < row_idx_[p]) ++q;
      if (q == q_end || pattern.row_idx_[q] != row_idx_[p])
        throw InvalidArgument("target pattern does not contain the source pattern");
      out[q] = values_[p];
    }
  }
  return out;
}

SparseSymmetric SparseSymmetric::pattern_union(const SparseSymmetric& a, const SparseSymmetric& b) {
  if (a.n_ != b.n_) throw InvalidArgument("pattern union requires equal dimensions");
  std::vector<int> col_ptr(a.n_ + 1, 0);
  std::vector<int> rows;
  rows.reserve(std::max(a.nnz(), b.nnz()));
  for (int j = 0; j < a.n_; ++j) {
    int p = a.col_ptr_[j];
    int q = b.col_ptr_[j];
    const int pe = a.col_ptr_[j + 1];
    const int qe = b.col_ptr_[j + 1];
    while (p < pe || q < qe) {
      int r;
      if (q == qe || (p < pe && a.row_idx_[p] < b.row_idx_[q])) {
        r = a.row_idx_[p++];
      } else if (p == pe || b.row_idx_[q] < a.row_idx_[p]) {
        r = b.row_idx_[q++];
      } else {
        r = a.row_idx_[p];
        ++p;
        ++q;
      }
      rows.push_back(r);
    }
    col_ptr[j + 1] = static_cast<int>(rows.size());
  }
  std::vector<double> values(rows.size(), 0.0);
  return SparseSymmetric(a.n_, std::move(col_ptr), std::move(rows), std::move(values));
}

SparseSymmetric read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open matrix file " + path.string());
  const std::string src = path.string();
  std::string line;
  std::size_t line_no = 0;
  long long n = -1;
  long long nnz = -1;
  std::vector<SparseSymmetric::Entry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (n < 0) {
      if (!(ls >> n >> nnz) || n < 0 || nnz < 0) throw ParseError(src, line_no, "expected header `n nnz`");
      entries.reserve(static_cast<std::size_t>(nnz));
      continue;
    }
    long long r = 0;
    long long c = 0;
    double v = 0.0;
    if (!(ls >> r >> c >> v)) throw ParseError(src, line_no, "expected `row col value`");
    if (r < 0 || c < 0 || r >= n || c >= n) throw ParseError(src, line_no, "index out of range");
    if (r < c) throw ParseError(src, line_no, "entry above the diagonal; lower triangle only");
    entries.push_back({static_cast<int>(r), static_cast<int>(c), v});
  }
  if (n < 0) throw ParseError(src, line_no, "missing header");
  if (static_cast<long long>(entries.size()) != nnz)
    throw ParseError(src, line_no,
                     "header declares " + std::to_string(nnz) + " entries, found " +
                         std::to_string(entries.size()));
  return SparseSymmetric::from_entries(static_cast<int>(n), entries);
}

void write_triplets(const SparseSymmetric& q, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write matrix file " + path.string());
  out.precision(17);
  out << q.dimension() << ' ' << q.nnz() << '\n';
  const auto ptr = q.col_ptr();
  const auto idx = q.row_idx();
  const auto val = q.values();
  for (int j = 0; j < q.dimension(); ++j)
    for (int p = ptr[j]; p < ptr[j + 1]; ++p) out << idx[p] << ' ' << j << ' ' << val[p] << '\n';
}

// ---------------------------------------------------------------------------
// CholeskyFactor

CholeskyFactor CholeskyFactor::factorize(const SparseSymmetric& q, Ordering ordering) {
  CholeskyFactor f;
  f.analyze(q, ordering);
  f.numeric(q);
  return f;
}

void CholeskyFactor::refactorize(const SparseSymmetric& q) {
  if (q.dimension() != n_ || !std::equal(q.col_ptr().begin(), q.col_ptr().end(), q_ptr_.begin(),
                                         q_ptr_.end()) ||
      !std::equal(q.row_idx().begin(), q.row_idx().end(), q_idx_.begin(), q_idx_.end()))
    throw InvalidArgument("refactorize requires the sparsity pattern of the analyzed matrix");
  numeric(q);
}

CholeskyFactor refactorize(CholeskyFactor factor, const SparseSymmetric& q) {
  factor.refactorize(q);
  return factor;
}

void CholeskyFactor::analyze(const SparseSymmetric& q, Ordering ordering) {
  n_ = q.dimension();
  q_ptr_.assign(q.col_ptr().begin(), q.col_ptr().end());
  q_idx_.assign(q.row_idx().begin(), q.row_idx().end());

  perm_.resize(n_);
  if (ordering == Ordering::natural || n_ == 0) {
    std::iota(perm_.begin(), perm_.end(), 0);
  } else {
    Eigen::SparseMatrix<double> full = q.to_eigen_full();
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(full, pinv);
    for (int k = 0; k < n_; ++k) perm_[k] = pinv.indices()[k];
  }
  pinv_.assign(n_, 0);
  for (int k = 0; k < n_; ++k) pinv_[perm_[k]] = k;

  // Permuted upper triangle, column-major with sorted rows.
  struct Slot {
    int col;
    int row;
    int source;
  };
  std::vector<Slot> slots;
  slots.reserve(q.nnz());
  const auto ptr = q.col_ptr();
  const auto idx = q.row_idx();
  for (int j = 0; j < n_; ++j)
    for (int p = ptr[j]; p < ptr[j + 1]; ++p) {
      const int a = pinv_[idx[p]];
      const int b = pinv_[j];
      slots.push_back({std::max(a, b), std::min(a, b), p});
    }
  std::sort(slots.begin(), slots.end(), [](const Slot& x, const Slot& y) {
    return x.col != y.col ? x.col < y.col : x.row < y.row;
  });
  c_ptr_.assign(n_ + 1, 0);
  c_idx_.resize(slots.size());
  value_map_.resize(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    ++c_ptr_[slots[s].col + 1];
    c_idx_[s] = slots[s].row;
    value_map_[slots[s].source] = static_cast<int>(s);
  }
  std::partial_sum(c_ptr_.begin(), c_ptr_.end(), c_ptr_.begin());

  // Elimination tree.
  parent_.assign(n_, -1);
  std::vector<int> ancestor(n_, -1);
  for (int k = 0; k < n_; ++k) {
    for (int p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p) {
      for (int i = c_idx_[p]; i != -1 && i < k;) {
        const int next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) parent_[i] = k;
        i = next;
      }
    }
  }

  // Column counts by walking every row subtree once.
  std::vector<int> counts(n_, 1);
  std::vector<int> mark(n_, -1);
  for (int k = 0; k < n_; ++k) {
    mark[k] = k;
    for (int p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p)
      for (int i = c_idx_[p]; mark[i] != k; i = parent_[i]) {
        mark[i] = k;
        ++counts[i];
      }
  }
  l_ptr_.assign(n_ + 1, 0);
  for (int k = 0; k < n_; ++k) l_ptr_[k + 1] = l_ptr_[k] + counts[k];
  l_idx_.assign(static_cast<std::size_t>(l_ptr_[n_]), 0);
  l_val_.assign(l_idx_.size(), 0.0);
}

void CholeskyFactor::numeric(const SparseSymmetric& q) {
  std::vector<double> c_val(c_idx_.size());
  const auto qv = q.values();
  for (std::size_t p = 0; p < qv.size(); ++p) c_val[value_map_[p]] = qv[p];

  std::vector<int> l_idx(l_idx_.size());
  std::vector<double> l_val(l_val_.size());
  std::vector<int> next(l_ptr_.begin(), l_ptr_.end() - 1);
  std::vector<double> x(n_, 0.0);
  std::vector<int> stack(n_);
  std::vector<int> mark(n_, -1);
  double log_det = 0.0;

  for (int k = 0; k < n_; ++k) {
    // Nonzero pattern of row k of L, in topological order.
    int top = n_;
    mark[k] = k;
    for (int p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p) {
      int len = 0;
      for (int i = c_idx_[p]; mark[i] != k; i = parent_[i]) {
        stack[len++] = i;
        mark[i] = k;
      }
      while (len > 0) stack[--top] = stack[--len];
    }
    for (int p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p) x[c_idx_[p]] = c_val[p];
    double d = x[k];
    x[k] = 0.0;
    for (; top < n_; ++top) {
      const int i = stack[top];
      const double lki = x[i] / l_val[l_ptr_[i]];
      x[i] = 0.0;
      for (int p = l_ptr_[i] + 1; p < next[i]; ++p) x[l_idx[p]] -= l_val[p] * lki;
      d -= lki * lki;
      const int p = next[i]++;
      l_idx[p] = k;
      l_val[p] = lki;
    }
    if (!(d > 0.0) || !std::isfinite(d))
      throw NotSpdError(static_cast<std::size_t>(perm_[k]),
                        "matrix is not positive definite: non-positive pivot at index " +
                            std::to_string(perm_[k]));
    const int p = next[k]++;
    l_idx[p] = k;
    l_val[p] = std::sqrt(d);
    log_det += std::log(d);
  }
  l_idx_ = std::move(l_idx);
  l_val_ = std::move(l_val);
  log_det_ = log_det;
}

void CholeskyFactor::apply_l_inverse(Eigen::VectorXd& y) const {
  for (int j = 0; j < n_; ++j) {
    const int p0 = l_ptr_[j];
    const double yj = y[j] / l_val_[p0];
    y[j] = yj;
    for (int p = p0 + 1; p < l_ptr_[j + 1]; ++p) y[l_idx_[p]] -= l_val_[p] * yj;
  }
}

void CholeskyFactor::apply_lt_inverse(Eigen::VectorXd& y) const {
  for (int j = n_ - 1; j >= 0; --j) {
    const int p0 = l_ptr_[j];
    double acc = y[j];
    for (int p = p0 + 1; p < l_ptr_[j + 1]; ++p) acc -= l_val_[p] * y[l_idx_[p]];
    y[j] = acc / l_val_[p0];
  }
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw InvalidArgument("right-hand side length does not match factor dimension");
  Eigen::VectorXd y(n_);
  for (int k = 0; k < n_; ++k) y[k] = b[perm_[k]];
  apply_l_inverse(y);
  apply_lt_inverse(y);
  Eigen::VectorXd x(n_);
  for (int k = 0; k < n_; ++k) x[perm_[k]] = y[k];
  return x;
}

Eigen::VectorXd CholeskyFactor::sample_with_noise(const Eigen::VectorXd& b,
                                                  const Eigen::VectorXd& z) const {
  if (b.size() != n_ || z.size() != n_)
    throw InvalidArgument("sampling vectors must match factor dimension");
  Eigen::VectorXd x = solve(b);
  Eigen::VectorXd y = z;
  apply_lt_inverse(y);
  for (int k = 0; k < n_; ++k) x[perm_[k]] += y[k];
  return x;
}

Eigen::MatrixXd CholeskyFactor::dense_factor() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n_, n_);
  for (int j = 0; j < n_; ++j)
    for (int p = l_ptr_[j]; p < l_ptr_[j + 1]; ++p) l(l_idx_[p], j) = l_val_[p];
  return l;
}

}  // namespace wgmrf

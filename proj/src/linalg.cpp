#include "pfc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef PFC_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#else
#include <Eigen/SparseLU>
#endif

namespace pfc::linalg {

void CsrMatrix::validate() const {
  if (n < 0 || row_ptr.size() != static_cast<std::size_t>(n) + 1)
    throw std::invalid_argument("CsrMatrix: bad row_ptr size");
  if (row_ptr.front() != 0 || row_ptr.back() != static_cast<int>(col_idx.size()))
    throw std::invalid_argument("CsrMatrix: bad row_ptr bounds");
  if (vals.size() != col_idx.size())
    throw std::invalid_argument("CsrMatrix: vals/col_idx size mismatch");
  for (int r = 0; r < n; ++r) {
    if (row_ptr[r + 1] < row_ptr[r])
      throw std::invalid_argument("CsrMatrix: row_ptr not nondecreasing");
    for (int p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      if (col_idx[p] < 0 || col_idx[p] >= n)
        throw std::invalid_argument("CsrMatrix: column index out of range");
      if (p > row_ptr[r] && col_idx[p] <= col_idx[p - 1])
        throw std::invalid_argument("CsrMatrix: columns not sorted unique in row " +
                                    std::to_string(r));
    }
  }
}

Vector CsrMatrix::multiply(const Vector& x) const {
  Vector y = Vector::Zero(n);
  for (int r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
      acc += vals[p] * x[col_idx[p]];
    y[r] = acc;
  }
  return y;
}

std::size_t CsrMatrix::entry_index(int r, int c) const {
  auto first = col_idx.begin() + row_ptr[r];
  auto last = col_idx.begin() + row_ptr[r + 1];
  auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c)
    throw std::out_of_range("CsrMatrix: entry (" + std::to_string(r) + "," +
                            std::to_string(c) + ") not in pattern");
  return static_cast<std::size_t>(it - col_idx.begin());
}

DenseLu::DenseLu(const DenseMatrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("dense_lu: matrix must be square");
  if (!a.allFinite())
    throw std::invalid_argument("dense_lu: matrix has non-finite entries");
  lu_.compute(a);
  const auto& diag = lu_.matrixLU().diagonal();
  for (int i = 0; i < diag.size(); ++i)
    if (diag[i] == 0.0)
      throw std::runtime_error("dense_lu: singular matrix, zero pivot at row " +
                               std::to_string(i));
}

Vector DenseLu::solve(const Vector& b) const {
  if (b.size() != lu_.rows())
    throw std::invalid_argument("DenseLu::solve: size mismatch");
  return lu_.solve(b);
}

struct SparseLu::Impl {
#ifdef PFC_HAVE_UMFPACK
  Eigen::SparseMatrix<double> a_col;  // factorized matrix, column-major
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
#else
  Eigen::SparseMatrix<double> at;  // transpose of A: CSR(A) viewed as CSC
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
#endif
  std::vector<int> pat_ptr, pat_idx;
  bool analyzed = false;
  bool factorized = false;

  Vector base_solve(const Vector& b) {
#ifdef PFC_HAVE_UMFPACK
    return lu.solve(b);
#else
    // The stored matrix is A^T; solve the transposed system.
    return lu.transpose().solve(b);
#endif
  }
};

SparseLu::SparseLu() : impl_(std::make_unique<Impl>()) {}
SparseLu::~SparseLu() = default;
SparseLu::SparseLu(SparseLu&&) noexcept = default;
SparseLu& SparseLu::operator=(SparseLu&&) noexcept = default;

void SparseLu::factorize(const CsrMatrix& a) {
  a.validate();
  Impl& im = *impl_;
  const bool same_pattern =
      im.analyzed && im.pat_ptr == a.row_ptr && im.pat_idx == a.col_idx;
  const Eigen::Map<const Eigen::SparseMatrix<double>> at_map(
      a.n, a.n, a.nnz(), a.row_ptr.data(), a.col_idx.data(), a.vals.data());
#ifdef PFC_HAVE_UMFPACK
  if (!same_pattern) {
    im.a_col = at_map.transpose();
    im.lu.analyzePattern(im.a_col);
    im.pat_ptr = a.row_ptr;
    im.pat_idx = a.col_idx;
    im.analyzed = true;
  } else {
    // Same pattern: rebuild the column-major values in place. The
    // transposed-pattern positions are recomputed by Eigen's assignment.
    im.a_col = at_map.transpose();
  }
  im.lu.factorize(im.a_col);
#else
  if (!same_pattern) {
    im.at = at_map;
    im.lu.analyzePattern(im.at);
    im.pat_ptr = a.row_ptr;
    im.pat_idx = a.col_idx;
    im.analyzed = true;
  } else {
    std::copy(a.vals.begin(), a.vals.end(), im.at.valuePtr());
  }
  im.lu.factorize(im.at);
#endif
  if (im.lu.info() != Eigen::Success)
    throw std::runtime_error("sparse_lu: factorization failed (singular matrix?)");
  im.factorized = true;
}

Vector SparseLu::solve(const Vector& b, double residual_tol) {
  Impl& im = *impl_;
  if (!im.factorized) throw std::logic_error("SparseLu::solve before factorize");
  Vector x = im.base_solve(b);
  const double bnorm = b.norm();
#ifdef PFC_HAVE_UMFPACK
  const double resid = (im.a_col * x - b).norm();
#else
  const double resid = (im.at.transpose() * x - b).norm();
#endif
  if (resid > residual_tol * std::max(bnorm, 1e-300))
    throw std::runtime_error("sparse_lu: residual contract violated: " +
                             std::to_string(resid / std::max(bnorm, 1e-300)));
  return x;
}

Vector SparseLu::solve_system(const CsrMatrix& a, const Vector& b,
                              double residual_tol) {
  Impl& im = *impl_;
  const bool same_pattern =
      im.analyzed && im.pat_ptr == a.row_ptr && im.pat_idx == a.col_idx;
  bool fresh = false;
  if (!im.factorized || !same_pattern) {
    factorize(a);
    fresh = true;
  }
  const double bnorm = std::max(b.norm(), 1e-300);
  for (;;) {
    Vector x = im.base_solve(b);
    double prev_rnorm = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < 12; ++sweep) {
      const Vector r = b - a.multiply(x);
      const double rnorm = r.norm();
      if (rnorm <= residual_tol * bnorm) return x;
      if (rnorm > 0.5 * prev_rnorm) break;  // stalled
      prev_rnorm = rnorm;
      x += im.base_solve(r);
    }
    if (fresh)
      throw std::runtime_error(
          "sparse_lu: residual contract violated after refactorization");
    factorize(a);
    fresh = true;
  }
}

Vector sparse_lu_solve(const CsrMatrix& a, const Vector& b,
                       double residual_tol) {
  SparseLu solver;
  solver.factorize(a);
  return solver.solve(b, residual_tol);
}

}  // namespace pfc::linalg

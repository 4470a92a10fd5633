#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <memory>
#include <vector>

namespace pfc::linalg {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Square sparse matrix in compressed-row storage.
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;  // size n+1
  std::vector<int> col_idx;  // sorted, unique per row
  std::vector<double> vals;

  std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }
  void validate() const;
  Vector multiply(const Vector& x) const;
  /// Position of entry (r,c) in vals; throws if not present in the pattern.
  std::size_t entry_index(int r, int c) const;
};

/// Dense LU with partial pivoting (PA = LU).
class DenseLu {
public:
  explicit DenseLu(const DenseMatrix& a);
  Vector solve(const Vector& b) const;
  int rows() const { return static_cast<int>(lu_.rows()); }

private:
  Eigen::PartialPivLU<DenseMatrix> lu_;
};

inline DenseLu dense_lu(const DenseMatrix& a) { return DenseLu(a); }

/// Sparse direct LU (UMFPACK when available, Eigen SparseLU with COLAMD
/// otherwise). The symbolic analysis is reused across factorizations with
/// the same sparsity pattern. Solves check the relative residual against
/// the contract tolerance and throw if it is violated.
class SparseLu {
public:
  SparseLu();
  ~SparseLu();
  SparseLu(SparseLu&&) noexcept;
  SparseLu& operator=(SparseLu&&) noexcept;

  void factorize(const CsrMatrix& a);
  Vector solve(const Vector& b, double residual_tol = 1e-10);

  /// Solve a x = b, reusing the previous numeric factorization as a
  /// frozen preconditioner with defect-correction sweeps; refactorizes
  /// automatically when the sweeps cannot reach the residual contract.
  /// Intended for sequences of nearby systems (Newton chains).
  Vector solve_system(const CsrMatrix& a, const Vector& b,
                      double residual_tol = 1e-10);

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot solve of Ax = b with the residual contract.
Vector sparse_lu_solve(const CsrMatrix& a, const Vector& b,
                       double residual_tol = 1e-10);

}  // namespace pfc::linalg

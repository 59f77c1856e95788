#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ems/errors.hpp"

namespace ems {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Compressed-row sparse matrix. Duplicate (row, col) entries are summed
/// when built from triplets; explicit zeros are kept.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  static SparseMatrix from_triplets(int n_rows, int n_cols, std::vector<Triplet> entries);
  static SparseMatrix identity(int n);

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const int> row_ptr() const { return row_ptr_; }
  std::span<const int> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }

  /// Entry (i, j), zero when not stored. O(log row length).
  double at(int i, int j) const;

  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  /// y = A^T x
  void multiply_transposed(std::span<const double> x, std::span<double> y) const;

  SparseMatrix transposed() const;
  SparseMatrix scaled(double factor) const;
  std::vector<double> row_sums() const;

 private:
  int n_rows_ = 0;
  int n_cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

struct SolveReport {
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
  /// CG only: a zero diagonal entry forced the identity preconditioner.
  bool preconditioner_fallback = false;
};

/// An iterative solve that did not converge or produced an invalid
/// probability vector.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, SolveReport report)
      : Error(what), report_(report) {}
  const SolveReport& report() const { return report_; }

 private:
  SolveReport report_;
};

/// D = [1 | columns of Q except `drop_state`]; the balance equation of the
/// dropped state is replaced by the normalization row of D^T.
/// Throws DimensionError if Q is not square and InvalidInstanceError if a row
/// sum of Q deviates from zero by more than 1e-8 (relative to the largest
/// absolute entry of that row).
SparseMatrix build_reduced_matrix(const SparseMatrix& q, int drop_state = 0);

/// Restarted GMRES with a diagonal (right) preconditioner when every diagonal
/// entry is non-zero. Stops when ||Ax - b||_2 <= tol * ||b||_2; `max_iter`
/// bounds the total number of Arnoldi steps.
std::pair<std::vector<double>, SolveReport> gmres_solve(const SparseMatrix& a,
                                                        std::span<const double> b,
                                                        double tol = 1e-10,
                                                        int max_iter = -1,
                                                        int restart = 50);

/// Jacobi-preconditioned CG on D D^T v = D e_1 (the ones vector). D D^T is
/// applied as two sparse products and never formed. Convergence is
/// ||D D^T v - 1||_2 <= tol * ||1||_2.
std::pair<std::vector<double>, SolveReport> cg_normal_solve(const SparseMatrix& d,
                                                            double tol = 1e-10,
                                                            int max_iter = -1);

}  // namespace ems

#include "ems/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

SparseMatrix SparseMatrix::from_triplets(int n_rows, int n_cols, std::vector<Triplet> entries) {
  if (n_rows < 0 || n_cols < 0) throw DimensionError("negative matrix dimensions");
  for (const auto& t : entries) {
    if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols) {
      throw DimensionError(fmt::format("entry ({}, {}) outside {}x{} matrix", t.row, t.col,
                                       n_rows, n_cols));
    }
    if (!std::isfinite(t.value)) throw DimensionError("non-finite matrix entry");
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.n_rows_ = n_rows;
  m.n_cols_ = n_cols;
  m.row_ptr_.assign(static_cast<std::size_t>(n_rows) + 1, 0);
  m.col_idx_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& t = entries[k];
    if (!m.col_idx_.empty() && k > 0 && entries[k - 1].row == t.row &&
        entries[k - 1].col == t.col) {
      m.values_.back() += t.value;
      continue;
    }
    m.col_idx_.push_back(t.col);
    m.values_.push_back(t.value);
    ++m.row_ptr_[static_cast<std::size_t>(t.row) + 1];
  }
  std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
  return m;
}

SparseMatrix SparseMatrix::identity(int n) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

double SparseMatrix::at(int i, int j) const {
  const auto begin = col_idx_.begin() + row_ptr_[i];
  const auto end = col_idx_.begin() + row_ptr_[i + 1];
  auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < n_rows_; ++i) {
    double s = 0.0;
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_idx_[k]];
    y[i] = s;
  }
}

void SparseMatrix::multiply_transposed(std::span<const double> x, std::span<double> y) const {
  std::fill(y.begin(), y.end(), 0.0);
  for (int i = 0; i < n_rows_; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) y[col_idx_[k]] += values_[k] * xi;
  }
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<Triplet> t;
  t.reserve(values_.size());
  for (int i = 0; i < n_rows_; ++i) {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) t.push_back({col_idx_[k], i, values_[k]});
  }
  return from_triplets(n_cols_, n_rows_, std::move(t));
}

SparseMatrix SparseMatrix::scaled(double factor) const {
  SparseMatrix m = *this;
  for (auto& v : m.values_) v *= factor;
  return m;
}

std::vector<double> SparseMatrix::row_sums() const {
  std::vector<double> s(static_cast<std::size_t>(n_rows_), 0.0);
  for (int i = 0; i < n_rows_; ++i) {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s[i] += values_[k];
  }
  return s;
}

SparseMatrix build_reduced_matrix(const SparseMatrix& q, int drop_state) {
  if (q.n_rows() != q.n_cols()) {
    throw DimensionError(fmt::format("generator must be square, got {}x{}", q.n_rows(), q.n_cols()));
  }
  const int n = q.n_rows();
  if (drop_state < 0 || drop_state >= n) throw DimensionError("drop state out of range");
  const auto rp = q.row_ptr();
  const auto ci = q.col_idx();
  const auto va = q.values();
  std::vector<Triplet> t;
  t.reserve(q.nnz() + static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double sum = 0.0, scale = 0.0;
    for (int k = rp[i]; k < rp[i + 1]; ++k) {
      sum += va[k];
      scale = std::max(scale, std::abs(va[k]));
    }
    if (std::abs(sum) > 1e-8 * std::max(1.0, scale)) {
      throw InvalidInstanceError(fmt::format("row {} of the generator sums to {}", i, sum));
    }
    t.push_back({i, 0, 1.0});
    for (int k = rp[i]; k < rp[i + 1]; ++k) {
      const int j = ci[k];
      if (j == drop_state) continue;
      // Columns after the dropped one shift left by one; column 0 holds ones.
      const int col = j < drop_state ? j + 1 : j;
      t.push_back({i, col, va[k]});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

std::pair<std::vector<double>, SolveReport> gmres_solve(const SparseMatrix& a,
                                                        std::span<const double> b, double tol,
                                                        int max_iter, int restart) {
  if (a.n_rows() != a.n_cols()) throw DimensionError("GMRES needs a square matrix");
  const int n = a.n_rows();
  if (static_cast<int>(b.size()) != n) throw DimensionError("right-hand side size mismatch");
  if (max_iter < 0) max_iter = 10 * std::max(n, 1);
  restart = std::clamp(restart, 1, std::max(n, 1));

  SolveReport report;
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    report.converged = true;
    return {x, report};
  }

  // Right Jacobi scaling: solve (A M^-1) u = b, x = M^-1 u.
  std::vector<double> minv(static_cast<std::size_t>(n), 1.0);
  bool use_diag = true;
  for (int i = 0; i < n && use_diag; ++i) {
    const double d = a.at(i, i);
    if (d == 0.0) use_diag = false;
    minv[i] = d == 0.0 ? 1.0 : 1.0 / d;
  }
  if (!use_diag) std::fill(minv.begin(), minv.end(), 1.0);

  const auto m = static_cast<std::size_t>(restart);
  std::vector<std::vector<double>> v(m + 1, std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<double> h((m + 1) * m, 0.0);
  std::vector<double> cs(m), sn(m), g(m + 1), w(static_cast<std::size_t>(n)),
      tmp(static_cast<std::size_t>(n)), r(static_cast<std::size_t>(n));
  auto H = [&](std::size_t i, std::size_t j) -> double& { return h[i * m + j]; };

  int total = 0;
  while (true) {
    a.multiply(x, r);
    for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double beta = norm2(r);
    report.residual_norm = beta;
    if (beta <= tol * bnorm) {
      report.converged = true;
      break;
    }
    if (total >= max_iter) break;
    for (int i = 0; i < n; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    std::size_t k = 0;
    for (; k < m && total < max_iter; ++k) {
      ++total;
      for (int i = 0; i < n; ++i) tmp[i] = minv[i] * v[k][i];
      a.multiply(tmp, w);
      // Modified Gram-Schmidt.
      for (std::size_t j = 0; j <= k; ++j) {
        const double hij = dot(w, v[j]);
        H(j, k) = hij;
        for (int i = 0; i < n; ++i) w[i] -= hij * v[j][i];
      }
      const double hk = norm2(w);
      H(k + 1, k) = hk;
      if (hk != 0.0) {
        for (int i = 0; i < n; ++i) v[k + 1][i] = w[i] / hk;
      }
      for (std::size_t j = 0; j < k; ++j) {
        const double t0 = cs[j] * H(j, k) + sn[j] * H(j + 1, k);
        H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
        H(j, k) = t0;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs[k] = denom == 0.0 ? 1.0 : H(k, k) / denom;
      sn[k] = denom == 0.0 ? 0.0 : H(k + 1, k) / denom;
      H(k, k) = cs[k] * H(k, k) + sn[k] * H(k + 1, k);
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      if (std::abs(g[k + 1]) <= tol * bnorm || hk == 0.0) {
        ++k;
        break;
      }
    }
    // Back substitution on the k x k triangle, then x += M^-1 V y.
    std::vector<double> y(k, 0.0);
    for (std::size_t ii = k; ii-- > 0;) {
      double s = g[ii];
      for (std::size_t j = ii + 1; j < k; ++j) s -= H(ii, j) * y[j];
      y[ii] = H(ii, ii) == 0.0 ? 0.0 : s / H(ii, ii);
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (int i = 0; i < n; ++i) x[i] += minv[i] * y[j] * v[j][i];
    }
  }
  report.iterations = total;
  return {x, report};
}

std::pair<std::vector<double>, SolveReport> cg_normal_solve(const SparseMatrix& d, double tol,
                                                            int max_iter) {
  if (d.n_rows() != d.n_cols()) throw DimensionError("reduced matrix must be square");
  const int n = d.n_rows();
  if (max_iter < 0) max_iter = 10 * std::max(n, 1);
  SolveReport report;
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  if (n == 0) {
    report.converged = true;
    return {x, report};
  }

  // diag(D D^T)_i = squared norm of row i of D.
  std::vector<double> minv(static_cast<std::size_t>(n), 1.0);
  const auto rp = d.row_ptr();
  const auto va = d.values();
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = rp[i]; k < rp[i + 1]; ++k) s += va[k] * va[k];
    if (s == 0.0) report.preconditioner_fallback = true;
    minv[i] = s == 0.0 ? 1.0 : 1.0 / s;
  }
  if (report.preconditioner_fallback) std::fill(minv.begin(), minv.end(), 1.0);

  std::vector<double> tmp(static_cast<std::size_t>(n));
  auto apply = [&](std::span<const double> in, std::span<double> out) {
    d.multiply_transposed(in, tmp);
    d.multiply(tmp, out);
  };

  const std::vector<double> rhs(static_cast<std::size_t>(n), 1.0);
  const double bnorm = std::sqrt(static_cast<double>(n));
  std::vector<double> r = rhs, z(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n)),
                      q(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) z[i] = minv[i] * r[i];
  p = z;
  double rho = dot(r, z);
  double rnorm = norm2(r);
  int it = 0;
  while (rnorm > tol * bnorm && it < max_iter) {
    apply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) break;
    const double alpha = rho / pq;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    ++it;
    // Refresh the recursive residual now and then to limit drift.
    if (it % 200 == 0) {
      apply(x, q);
      for (int i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
    }
    rnorm = norm2(r);
    for (int i = 0; i < n; ++i) z[i] = minv[i] * r[i];
    const double rho_new = dot(r, z);
    const double beta = rho_new / rho;
    rho = rho_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  apply(x, q);
  for (int i = 0; i < n; ++i) q[i] = rhs[i] - q[i];
  report.residual_norm = norm2(q);
  report.iterations = it;
  report.converged = report.residual_norm <= tol * bnorm;
  return {x, report};
}

}  // namespace ems

#include "xood/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xood/error.hpp"

namespace xood {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_tensor(const Tensor& t) {
  if (t.rank() == 1) {
    return Matrix(t.dim(0), 1, std::vector<double>(t.storage().begin(), t.storage().end()));
  }
  if (t.rank() != 2) {
    throw DimensionError("expected a rank-2 tensor for a matrix, got " + shape_to_string(t.shape()));
  }
  return Matrix(t.dim(0), t.dim(1), std::vector<double>(t.storage().begin(), t.storage().end()));
}

Tensor Matrix::to_tensor() const {
  std::vector<float> data(data_.begin(), data_.end());
  return Tensor({static_cast<std::uint32_t>(rows_), static_cast<std::uint32_t>(cols_)},
                std::move(data));
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix vstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t rows = 0;
  const std::size_t cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("vstack: column counts differ");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.storage().begin(), p.storage().end());
  return Matrix(rows, cols, std::move(data));
}

std::vector<double> column_means(const Matrix& m) {
  if (m.rows() == 0) throw ContractError("column_means: matrix has no rows");
  std::vector<double> mu(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) mu[c] += row[c];
  }
  for (auto& v : mu) v /= static_cast<double>(m.rows());
  return mu;
}

Matrix covariance(const Matrix& m, std::span<const double> means) {
  if (m.rows() < 2) throw ContractError("covariance: need at least two rows");
  if (means.size() != m.cols()) throw DimensionError("covariance: means length mismatch");
  const std::size_t d = m.cols();
  Matrix cov(d, d);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < d; ++c) centered[c] = row[c] - means[c];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) cov(i, j) += centered[i] * centered[j];
    }
  }
  const double denom = static_cast<double>(m.rows() - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
    }
  }
  return cov;
}

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is not square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  double smallest = std::numeric_limits<double>::infinity();
  bool failed = false;
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    smallest = std::min(smallest, diag);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      failed = true;
      continue;
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  if (failed) throw SingularMatrixError(smallest);
  return l;
}

void solve_lower(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    const auto row = lower.row(i);
    for (std::size_t k = 0; k < i; ++k) s -= row[k] * b[k];
    b[i] = s / row[i];
  }
}

void solve_lower_transposed(const Matrix& lower, std::span<double> y) {
  const std::size_t n = lower.rows();
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * y[k];
    y[ii] = s / lower(ii, ii);
  }
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b) {
  std::vector<double> x(b.begin(), b.end());
  solve_lower(lower, x);
  solve_lower_transposed(lower, x);
  return x;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace xood

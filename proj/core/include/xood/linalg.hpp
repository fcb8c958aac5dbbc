#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xood/tensor.hpp"

namespace xood {

/// Row-major f64 matrix. Feature tables, covariances and design matrices
/// all live here; tensors stay f32.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  /// Rank-2 tensor -> matrix; rank-1 tensor -> single column.
  static Matrix from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::vector<double> column(std::size_t c) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);
Matrix vstack(std::span<const Matrix> parts);

std::vector<double> column_means(const Matrix& m);
/// Unbiased (n-1) sample covariance about `means`.
Matrix covariance(const Matrix& m, std::span<const double> means);

/// Lower-triangular factor L of a symmetric positive-definite matrix, A = L Lᵀ.
/// Throws SingularMatrixError carrying the smallest pivot on failure.
Matrix cholesky(const Matrix& spd);

/// Solves L y = b in place.
void solve_lower(const Matrix& lower, std::span<double> b);
/// Solves Lᵀ x = y in place.
void solve_lower_transposed(const Matrix& lower, std::span<double> y);
/// Solves A x = b given A's Cholesky factor.
std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace xood

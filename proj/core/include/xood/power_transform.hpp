#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xood/linalg.hpp"

namespace xood {

/// Yeo-Johnson map:
///   x >= 0: ((x + 1)^λ - 1) / λ          (log(x + 1) at λ = 0)
///   x <  0: -((1 - x)^(2-λ) - 1) / (2 - λ) (-log(1 - x) at λ = 2)
/// Strictly increasing in x for every λ.
double yeo_johnson(double x, double lambda);

/// Gaussian profile log-likelihood of λ for one column:
///   -(n/2) log σ̂²(λ) + (λ - 1) Σ sign(x) log(|x| + 1)
/// with σ̂² the (biased) variance of the transformed values.
double yeo_johnson_log_likelihood(std::span<const double> x, double lambda);

/// Maximises the profile log-likelihood over [lo, hi]: a coarse scan to
/// bracket the optimum, then golden-section search down to `tol`.
double fit_yeo_johnson_lambda(std::span<const double> x, double lo = -5.0, double hi = 5.0,
                              double tol = 1e-4);

/// Per-column Yeo-Johnson followed by standardisation to zero mean and unit
/// (population) variance.
struct PowerTransform {
  std::vector<double> lambda;
  std::vector<double> mean;
  std::vector<double> std;
  /// Columns whose transformed std fell below 1e-8; their std is stored as 1.
  std::vector<bool> flagged;

  std::size_t dims() const { return lambda.size(); }

  /// Throws ContractError naming the row/column of any non-finite input.
  Matrix apply(const Matrix& features) const;
  void apply_row(std::span<const double> in, std::span<double> out) const;

  /// One line per dimension: "<index> <lambda> <mean> <std>".
  std::string to_text() const;
  static PowerTransform from_text(std::string_view text);

  friend bool operator==(const PowerTransform&, const PowerTransform&) = default;
};

inline constexpr double kStdGuard = 1e-8;

/// Requires at least 10 rows.
PowerTransform fit_power_transform(const Matrix& features);

}  // namespace xood

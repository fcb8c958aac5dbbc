#pragma once

// Hand-rolled random case generators for the property tests.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "xood/linalg.hpp"
#include "xood/model.hpp"
#include "xood/rng.hpp"
#include "xood/tensor.hpp"

namespace gen {

inline xood::Tensor tensor(xood::Rng& rng, xood::Shape shape, double lo = -1.0, double hi = 1.0) {
  xood::Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline xood::Matrix gaussian_matrix(xood::Rng& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  xood::Matrix m(rows, cols);
  for (auto& v : m.storage()) v = rng.normal(0.0, sd);
  return m;
}

/// Rows drawn from N(mu, A A') with a random mixing matrix A.
inline xood::Matrix correlated_matrix(xood::Rng& rng, std::size_t rows, std::size_t cols) {
  xood::Matrix a = gaussian_matrix(rng, cols, cols);
  std::vector<double> mu(cols);
  for (auto& v : mu) v = rng.uniform(-3.0, 3.0);
  xood::Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> z(cols);
    for (auto& v : z) v = rng.normal();
    for (std::size_t j = 0; j < cols; ++j) {
      double s = mu[j];
      for (std::size_t k = 0; k < cols; ++k) s += a(j, k) * z[k];
      out(i, j) = s;
    }
  }
  return out;
}

/// Skewed one-dimensional samples; `family` cycles through a few shapes.
inline std::vector<double> skewed(xood::Rng& rng, std::size_t n, int family) {
  std::vector<double> x(n);
  for (auto& v : x) {
    const double z = rng.normal();
    switch (family % 5) {
      case 0: v = std::exp(0.6 * z); break;                 // log-normal
      case 1: v = -std::log(1.0 - rng.uniform());  break;   // exponential
      case 2: v = z * z;  break;                            // chi-square(1)
      case 3: v = -std::exp(0.5 * z) + 1.0;  break;         // left-skewed, both signs
      default: v = 3.0 * z + 0.2 * z * z * z;  break;       // heavy tails
    }
  }
  return x;
}

/// Scores drawn from a handful of levels so ties are frequent.
inline std::vector<double> tied_scores(xood::Rng& rng, std::size_t n, int levels, double shift) {
  std::vector<double> s(n);
  for (auto& v : s) v = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) + shift;
  return s;
}

/// conv(3, 3x3) - relu - flatten - dense - relu - dense(K) - softmax over [1, side, side].
inline xood::Network tiny_network(xood::Rng& rng, std::uint32_t side = 6, std::uint32_t classes = 3) {
  using xood::LayerSpec;
  const std::uint32_t conv_out = side - 2;
  const std::uint32_t flat = 3 * conv_out * conv_out;
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv2d(tensor(rng, {3, 1, 3, 3}), {0.1f, -0.2f, 0.05f}));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::dense(tensor(rng, {flat, 8}, -0.3, 0.3), std::vector<float>(8, 0.01f)));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::dense(tensor(rng, {8, classes}), std::vector<float>(classes, 0.0f)));
  layers.push_back(LayerSpec::softmax());
  return xood::Network({1, side, side}, std::move(layers));
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xood_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace gen

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace xood {

using Shape = std::vector<std::uint32_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major f32 array. The shape is non-empty and every dimension
/// is at least one.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::initializer_list<std::size_t> index);
  float at(std::initializer_list<std::size_t> index) const;

  /// Number of elements per entry along axis 0.
  std::size_t item_size() const;
  std::span<const float> item(std::size_t n) const;
  std::span<float> item(std::size_t n);

  /// Copy of entries [begin, end) along axis 0.
  Tensor slice(std::size_t begin, std::size_t end) const;

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<float> data_;
};

std::size_t element_count(const Shape& shape);

/// Concatenate along axis 0. All parts must share trailing dimensions.
Tensor concat(std::span<const Tensor> parts);

// Layer primitives. Layouts: images NCHW, kernels FCHW, dense weights [D, K].

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::span<const float> bias,
              std::uint32_t stride, std::uint32_t padding);
Tensor dense(const Tensor& input, const Tensor& weights, std::span<const float> bias);
Tensor relu(const Tensor& input);
Tensor maxpool2d(const Tensor& input, std::uint32_t window, std::uint32_t stride);
Tensor softmax(const Tensor& input);
/// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& input);

// Backward passes used by the reference CNN trainer.

struct Conv2dGrads {
  Tensor input;  // empty when not requested
  Tensor kernel;
  std::vector<float> bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                            std::uint32_t stride, std::uint32_t padding, bool need_input_grad);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  std::vector<float> bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output);

/// grad_input = grad_output where input > 0, else 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

/// Routes each window's gradient to the first maximal element of the window.
Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_output, std::uint32_t window,
                          std::uint32_t stride);

}  // namespace xood

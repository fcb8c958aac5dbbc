#include "xood/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "xood/error.hpp"

namespace xood {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must not be empty");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw DimensionError("tensor dimension " + std::to_string(i) + " is zero in shape " +
                           shape_to_string(shape));
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_to_string(t.shape()));
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::uint32_t stride,
                            std::uint32_t padding, const char* axis) {
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * std::size_t{padding};
  if (padded < k) {
    throw DimensionError(std::string("conv2d: kernel extent exceeds padded input along axis ") +
                         axis);
  }
  return (padded - k) / stride + 1;
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != element_count(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
  }
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw DimensionError("index out of range on axis " + std::to_string(axis));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

std::size_t Tensor::item_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

std::span<const float> Tensor::item(std::size_t n) const {
  const auto sz = item_size();
  return std::span<const float>(data_).subspan(n * sz, sz);
}

std::span<float> Tensor::item(std::size_t n) {
  const auto sz = item_size();
  return std::span<float>(data_).subspan(n * sz, sz);
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > shape_.at(0)) throw DimensionError("invalid slice range");
  Shape s = shape_;
  s[0] = static_cast<std::uint32_t>(end - begin);
  const auto sz = item_size();
  return Tensor(std::move(s), std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * sz),
                                                 data_.begin() + static_cast<std::ptrdiff_t>(end * sz)));
}

Tensor Tensor::reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
Tensor Tensor::reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no tensors given");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw DimensionError("concat: trailing dimensions differ: " + shape_to_string(p.shape()) +
                           " vs " + shape_to_string(shape));
    }
    total += p.dim(0);
  }
  shape[0] = static_cast<std::uint32_t>(total);
  std::vector<float> data;
  data.reserve(element_count(shape));
  for (const auto& p : parts) data.insert(data.end(), p.storage().begin(), p.storage().end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::span<const float> bias,
              std::uint32_t stride, std::uint32_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c) {
    throw DimensionError("conv2d: kernel channel axis (1) has " + std::to_string(kernel.dim(1)) +
                         " but input channel axis (1) has " + std::to_string(c));
  }
  if (bias.size() != f) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match kernel filter axis (0) " + std::to_string(f));
  }
  const std::size_t oh = conv_out_extent(h, kh, stride, padding, "H");
  const std::size_t ow = conv_out_extent(w, kw, stride, padding, "W");
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  Tensor out({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(f),
              static_cast<std::uint32_t>(oh), static_cast<std::uint32_t>(ow)});
  std::vector<double> acc(oh * ow);
  const float* in = input.storage().data();
  const float* ker = kernel.storage().data();
  float* o = out.storage().data();

  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t fi = 0; fi < f; ++fi) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(bias[fi]));
      for (std::size_t ci = 0; ci < c; ++ci) {
        const float* plane = in + ((img * c + ci) * h) * w;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = ker[((fi * c + ci) * kh + ky) * kw + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const float* row = plane + static_cast<std::size_t>(iy) * w;
              double* arow = acc.data() + oy * ow;
              // valid ox range: 0 <= ox*stride + kx - pad < w
              std::size_t ox_begin = 0;
              const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(kx) - pad;
              if (base < 0) ox_begin = (static_cast<std::size_t>(-base) + stride - 1) / stride;
              std::size_t ox_end = ow;
              const std::ptrdiff_t lim = static_cast<std::ptrdiff_t>(w) - base;  // ox*stride < lim
              if (lim <= 0) continue;
              ox_end = std::min(ow, (static_cast<std::size_t>(lim) + stride - 1) / stride);
              if (stride == 1) {
                const float* src = row + (static_cast<std::ptrdiff_t>(ox_begin) + base);
                double* dst = arow + ox_begin;
                const std::size_t len = ox_end - ox_begin;
                for (std::size_t i = 0; i < len; ++i) dst[i] += wv * src[i];
              } else {
                for (std::size_t ox = ox_begin; ox < ox_end; ++ox) {
                  arow[ox] += wv * row[static_cast<std::ptrdiff_t>(ox * stride) + base];
                }
              }
            }
          }
        }
      }
      float* dst = o + (img * f + fi) * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) dst[i] = static_cast<float>(acc[i]);
    }
  }
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, std::span<const float> bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weights, 2, "dense", "weights");
  const std::size_t n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  if (weights.dim(0) != d) {
    throw DimensionError("dense: input axis 1 has " + std::to_string(d) +
                         " but weights axis 0 has " + std::to_string(weights.dim(0)));
  }
  if (bias.size() != k) throw DimensionError("dense: bias length does not match weights axis 1");
  Tensor out({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(k)});
  std::vector<double> acc(k);
  const float* w = weights.storage().data();
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t j = 0; j < k; ++j) acc[j] = bias[j];
    const float* x = input.storage().data() + row * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double xv = x[i];
      if (xv == 0.0) continue;
      const float* wr = w + i * k;
      for (std::size_t j = 0; j < k; ++j) acc[j] += xv * wr[j];
    }
    float* o = out.storage().data() + row * k;
    for (std::size_t j = 0; j < k; ++j) o[j] = static_cast<float>(acc[j]);
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.storage()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor maxpool2d(const Tensor& input, std::uint32_t window, std::uint32_t stride) {
  require_rank(input, 4, "maxpool2d", "input");
  if (window == 0 || stride == 0) throw DimensionError("maxpool2d: window and stride must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < window || w < window) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) +
                         " exceeds spatial dims (H=" + std::to_string(h) + ", W=" +
                         std::to_string(w) + ")");
  }
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor out({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(c),
              static_cast<std::uint32_t>(oh), static_cast<std::uint32_t>(ow)});
  const float* in = input.storage().data();
  float* o = out.storage().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const float* plane = in + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < window; ++ky) {
          const float* row = plane + (oy * stride + ky) * w + ox * stride;
          for (std::size_t kx = 0; kx < window; ++kx) m = std::max(m, row[kx]);
        }
        o[(p * oh + oy) * ow + ox] = m;
      }
    }
  }
  return out;
}

Tensor softmax(const Tensor& input) {
  require_rank(input, 2, "softmax", "input");
  const std::size_t n = input.dim(0), k = input.dim(1);
  Tensor out(input.shape());
  for (std::size_t row = 0; row < n; ++row) {
    const float* x = input.storage().data() + row * k;
    float* o = out.storage().data() + row * k;
    const float m = *std::max_element(x, x + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(x[j]) - m);
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = static_cast<float>(std::exp(static_cast<double>(x[j]) - m) / total);
    }
  }
  return out;
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 1) throw DimensionError("flatten: empty tensor");
  return input.reshaped({input.shape()[0], static_cast<std::uint32_t>(input.item_size())});
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                            std::uint32_t stride, std::uint32_t padding, bool need_input_grad) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = grad_output.dim(2), ow = grad_output.dim(3);
  if (grad_output.dim(0) != n || grad_output.dim(1) != f) {
    throw DimensionError("conv2d_backward: grad_output shape " +
                         shape_to_string(grad_output.shape()) + " does not match forward pass");
  }
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  Conv2dGrads g;
  g.kernel = Tensor(kernel.shape());
  g.bias.assign(f, 0.0f);
  if (need_input_grad) g.input = Tensor(input.shape());

  const float* in = input.storage().data();
  const float* ker = kernel.storage().data();
  const float* go = grad_output.storage().data();
  std::vector<double> kacc(kernel.size(), 0.0);
  std::vector<double> bacc(f, 0.0);

  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t fi = 0; fi < f; ++fi) {
      const float* gplane = go + (img * f + fi) * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) bacc[fi] += gplane[i];
      for (std::size_t ci = 0; ci < c; ++ci) {
        const float* plane = in + (img * c + ci) * h * w;
        float* gin = need_input_grad ? g.input.storage().data() + (img * c + ci) * h * w : nullptr;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t kidx = ((fi * c + ci) * kh + ky) * kw + kx;
            const float wv = ker[kidx];
            double sum = 0.0;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::size_t ii = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
                const float gv = gplane[oy * ow + ox];
                sum += static_cast<double>(gv) * plane[ii];
                if (gin) gin[ii] += wv * gv;
              }
            }
            kacc[kidx] += sum;
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < kacc.size(); ++i) g.kernel[i] = static_cast<float>(kacc[i]);
  for (std::size_t i = 0; i < f; ++i) g.bias[i] = static_cast<float>(bacc[i]);
  return g;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output) {
  const std::size_t n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  if (grad_output.dim(0) != n || grad_output.dim(1) != k) {
    throw DimensionError("dense_backward: grad_output shape mismatch");
  }
  DenseGrads g;
  g.input = Tensor(input.shape());
  g.weights = Tensor(weights.shape());
  g.bias.assign(k, 0.0f);
  std::vector<double> wacc(d * k, 0.0), bacc(k, 0.0);
  const float* x = input.storage().data();
  const float* w = weights.storage().data();
  const float* go = grad_output.storage().data();
  for (std::size_t row = 0; row < n; ++row) {
    const float* gr = go + row * k;
    const float* xr = x + row * d;
    float* gi = g.input.storage().data() + row * d;
    for (std::size_t j = 0; j < k; ++j) bacc[j] += gr[j];
    for (std::size_t i = 0; i < d; ++i) {
      const float* wr = w + i * k;
      double s = 0.0;
      double* wa = wacc.data() + i * k;
      const double xv = xr[i];
      for (std::size_t j = 0; j < k; ++j) {
        s += static_cast<double>(wr[j]) * gr[j];
        wa[j] += xv * gr[j];
      }
      gi[i] = static_cast<float>(s);
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i) g.weights[i] = static_cast<float>(wacc[i]);
  for (std::size_t j = 0; j < k; ++j) g.bias[j] = static_cast<float>(bacc[j]);
  return g;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (input.shape() != grad_output.shape()) throw DimensionError("relu_backward: shape mismatch");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0f ? grad_output[i] : 0.0f;
  return g;
}

Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_output, std::uint32_t window,
                          std::uint32_t stride) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = grad_output.dim(2), ow = grad_output.dim(3);
  Tensor g(input.shape());
  for (std::size_t p = 0; p < n * c; ++p) {
    const float* plane = input.storage().data() + p * h * w;
    float* gp = g.storage().data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        gp[best] += grad_output[(p * oh + oy) * ow + ox];
      }
    }
  }
  return g;
}

}  // namespace xood

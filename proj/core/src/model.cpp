#include "xood/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xood/error.hpp"
#include "xood/rng.hpp"

namespace xood {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Softmax: return "softmax";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto k : {LayerKind::Conv2d, LayerKind::Dense, LayerKind::Relu, LayerKind::MaxPool2d,
                 LayerKind::Flatten, LayerKind::Softmax}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown layer kind '" + std::string(name) + "'", 0);
}

LayerSpec LayerSpec::conv2d(Tensor kernel, std::vector<float> bias, std::uint32_t stride,
                            std::uint32_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.weights = std::move(kernel);
  s.bias = std::move(bias);
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::dense(Tensor weights, std::vector<float> bias) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.weights = std::move(weights);
  s.bias = std::move(bias);
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::uint32_t window, std::uint32_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.window = window;
  s.stride = stride;
  return s;
}

namespace {

std::string layer_name(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

// Output shape of one layer for a single item (no batch axis).
Shape propagate(std::size_t index, const LayerSpec& l, const Shape& in) {
  auto fail = [&](const std::string& why) {
    throw DimensionError(layer_name(index, l) + ": " + why + "; input shape " + shape_to_string(in));
  };
  switch (l.kind) {
    case LayerKind::Conv2d: {
      if (in.size() != 3) fail("expects [C, H, W] input");
      if (l.weights.rank() != 4) fail("kernel must be rank 4");
      if (l.weights.dim(1) != in[0]) fail("kernel channel axis does not match input channels");
      if (l.bias.size() != l.weights.dim(0)) fail("bias length does not match filter count");
      if (l.stride == 0) fail("stride must be positive");
      const auto ph = in[1] + 2 * l.padding, pw = in[2] + 2 * l.padding;
      if (ph < l.weights.dim(2) || pw < l.weights.dim(3)) fail("kernel larger than padded input");
      return {static_cast<std::uint32_t>(l.weights.dim(0)),
              static_cast<std::uint32_t>((ph - l.weights.dim(2)) / l.stride + 1),
              static_cast<std::uint32_t>((pw - l.weights.dim(3)) / l.stride + 1)};
    }
    case LayerKind::Dense: {
      if (in.size() != 1) fail("expects flat input");
      if (l.weights.rank() != 2 || l.weights.dim(0) != in[0]) fail("weights axis 0 does not match input width");
      if (l.bias.size() != l.weights.dim(1)) fail("bias length does not match output width");
      return {static_cast<std::uint32_t>(l.weights.dim(1))};
    }
    case LayerKind::Relu: return in;
    case LayerKind::MaxPool2d: {
      if (in.size() != 3) fail("expects [C, H, W] input");
      if (l.window == 0 || l.stride == 0) fail("window and stride must be positive");
      if (in[1] < l.window || in[2] < l.window) fail("window larger than spatial dims");
      return {in[0], (in[1] - l.window) / l.stride + 1, (in[2] - l.window) / l.stride + 1};
    }
    case LayerKind::Flatten: return {static_cast<std::uint32_t>(element_count(in))};
    case LayerKind::Softmax: {
      if (in.size() != 1) fail("expects flat input");
      return in;
    }
  }
  fail("unknown layer kind");
  return {};
}

Tensor apply(const LayerSpec& l, const Tensor& x) {
  switch (l.kind) {
    case LayerKind::Conv2d: return conv2d(x, l.weights, l.bias, l.stride, l.padding);
    case LayerKind::Dense: return dense(x, l.weights, l.bias);
    case LayerKind::Relu: return relu(x);
    case LayerKind::MaxPool2d: return maxpool2d(x, l.window, l.stride);
    case LayerKind::Flatten: return flatten(x);
    case LayerKind::Softmax: return softmax(x);
  }
  throw ContractError("unknown layer kind");
}

void check_batch(const Network& net, const Tensor& batch) {
  const auto& in = net.input_shape();
  bool ok = batch.rank() == in.size() + 1;
  for (std::size_t i = 0; ok && i < in.size(); ++i) ok = batch.dim(i + 1) == in[i];
  if (!ok) {
    throw DimensionError("batch shape " + shape_to_string(batch.shape()) +
                         " does not match network input " + shape_to_string(in) +
                         " (expected [N, ...input])");
  }
}

ForwardResult run(const Network& net, const Tensor& batch, bool record) {
  check_batch(net, batch);
  ForwardResult result;
  const auto& layers = net.layers();
  if (record) result.trace.taps.reserve(net.activation_count());
  Tensor x = batch;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::Softmax && i + 1 == layers.size()) {
      result.trace.logits = x;
      result.trace.probabilities = softmax(x);
      break;
    }
    Tensor y = apply(l, x);
    if (l.kind == LayerKind::Relu && record) result.trace.taps.push_back(std::move(x));
    x = std::move(y);
    if (i + 1 == layers.size()) {
      result.trace.logits = x;
      result.trace.probabilities = softmax(x);
    }
  }
  result.predictions = argmax_rows(result.trace.logits);
  return result;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty()) throw DimensionError("network input shape must not be empty");
  if (layers_.empty()) throw DimensionError("network has no layers");
  Shape s = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    s = propagate(i, layers_[i], s);
    if (layers_[i].kind == LayerKind::Relu) activations_.push_back(i);
    if (layers_[i].kind == LayerKind::Softmax && i + 1 != layers_.size()) {
      throw DimensionError(layer_name(i, layers_[i]) + ": softmax is only supported as the final layer");
    }
  }
  if (s.size() != 1) {
    throw DimensionError("final layer must produce [N, K], got item shape " + shape_to_string(s));
  }
  num_classes_ = s[0];
}

std::vector<std::uint32_t> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("argmax_rows expects a rank-2 tensor");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<std::uint32_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = scores.storage().data() + r * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[r] = static_cast<std::uint32_t>(best);
  }
  return out;
}

ForwardResult forward_with_taps(const Network& net, const Tensor& batch) {
  return run(net, batch, true);
}

ForwardResult forward(const Network& net, const Tensor& batch) { return run(net, batch, false); }

Network make_reference_cnn(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed) {
  if (input_shape.size() != 3) throw DimensionError("reference CNN expects [C, H, W] input");
  Rng rng(derive_seed(seed, "init"));
  auto init = [&](Shape shape, std::size_t fan_in) {
    const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-s, s));
    return t;
  };
  const std::uint32_t c = input_shape[0];
  const auto k = static_cast<std::uint32_t>(num_classes);

  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv2d(init({8, c, 3, 3}, c * 9), std::vector<float>(8, 0.0f)));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::maxpool2d(2, 2));
  layers.push_back(LayerSpec::conv2d(init({16, 8, 3, 3}, 8 * 9), std::vector<float>(16, 0.0f)));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::maxpool2d(2, 2));
  layers.push_back(LayerSpec::flatten());

  // Work out the flattened width before adding the dense layers.
  Shape s = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) s = propagate(i, layers[i], s);
  const std::uint32_t flat = s[0];

  layers.push_back(LayerSpec::dense(init({flat, 64}, flat), std::vector<float>(64, 0.0f)));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::dense(init({64, k}, 64), std::vector<float>(k, 0.0f)));
  layers.push_back(LayerSpec::softmax());
  return Network(input_shape, std::move(layers));
}

TrainResult train(Network net, const Tensor& images, std::span<const std::uint32_t> labels,
                  const TrainConfig& config) {
  check_batch(net, images);
  const std::size_t n = images.dim(0);
  if (labels.size() != n) throw ContractError("train: label count does not match image count");
  const std::size_t k = net.num_classes();
  for (auto y : labels) {
    if (y >= k) throw ContractError("train: label " + std::to_string(y) + " out of range");
  }
  auto& layers = net.mutable_layers();
  if (layers.back().kind != LayerKind::Softmax) {
    throw ContractError("train: the network must end with a softmax layer");
  }
  if (config.batch_size == 0) throw ContractError("train: batch size must be positive");

  TrainResult result;
  Rng rng(derive_seed(config.seed, "train"));
  const float lr = static_cast<float>(config.learning_rate);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::size_t b = end - start;
      Shape bs = images.shape();
      bs[0] = static_cast<std::uint32_t>(b);
      Tensor x(bs);
      std::vector<std::uint32_t> y(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto src = images.item(order[start + i]);
        std::copy(src.begin(), src.end(), x.item(i).begin());
        y[i] = labels[order[start + i]];
      }

      // Forward, keeping every layer input. The final softmax is fused with the loss.
      std::vector<Tensor> acts;
      acts.reserve(layers.size());
      acts.push_back(std::move(x));
      for (std::size_t i = 0; i + 1 < layers.size(); ++i) acts.push_back(apply(layers[i], acts.back()));
      const Tensor& logits = acts.back();

      Tensor grad(logits.shape());
      double batch_loss = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        const float* z = logits.storage().data() + r * k;
        const double m = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += std::exp(z[j] - m);
        const double lse = m + std::log(total);
        batch_loss += lse - z[y[r]];
        for (std::size_t j = 0; j < k; ++j) {
          const double p = std::exp(z[j] - lse);
          grad[r * k + j] = static_cast<float>((p - (j == y[r] ? 1.0 : 0.0)) / static_cast<double>(b));
        }
      }
      if (!std::isfinite(batch_loss)) throw TrainingDivergedError(epoch);
      epoch_loss += batch_loss;

      for (std::size_t li = layers.size() - 1; li-- > 0;) {
        auto& l = layers[li];
        const Tensor& in = acts[li];
        switch (l.kind) {
          case LayerKind::Conv2d: {
            auto g = conv2d_backward(in, l.weights, grad, l.stride, l.padding, li > 0);
            for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= lr * g.kernel[i];
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * g.bias[i];
            grad = std::move(g.input);
            break;
          }
          case LayerKind::Dense: {
            auto g = dense_backward(in, l.weights, grad);
            for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= lr * g.weights[i];
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * g.bias[i];
            grad = std::move(g.input);
            break;
          }
          case LayerKind::Relu: grad = relu_backward(in, grad); break;
          case LayerKind::MaxPool2d: grad = maxpool2d_backward(in, grad, l.window, l.stride); break;
          case LayerKind::Flatten: grad = std::move(grad).reshaped(in.shape()); break;
          case LayerKind::Softmax: throw ContractError("train: softmax only supported as final layer");
        }
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw TrainingDivergedError(epoch);
    result.epoch_loss.push_back(epoch_loss);
  }

  std::size_t correct = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const auto end = std::min(n, start + kChunk);
    const auto preds = forward(net, images.slice(start, end)).predictions;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[start + i];
  }
  result.train_accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  result.network = std::move(net);
  return result;
}

TrainResult train_reference_cnn(const Tensor& images, std::span<const std::uint32_t> labels,
                                std::size_t num_classes, const TrainConfig& config) {
  if (images.rank() != 4) throw DimensionError("train_reference_cnn expects NCHW images");
  Shape in{images.shape()[1], images.shape()[2], images.shape()[3]};
  return train(make_reference_cnn(in, num_classes, config.seed), images, labels, config);
}

// --- persistence ------------------------------------------------------------

namespace {

std::string join_shape(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  for (auto part : split(text, ',')) {
    auto v = parse_int(part);
    if (!v || *v <= 0) throw FormatError("bad shape '" + text + "' in network manifest", 0);
    s.push_back(static_cast<std::uint32_t>(*v));
  }
  return s;
}

}  // namespace

Bundle network_to_bundle(const Network& net) {
  Bundle b;
  b.magic = "XNET";
  auto& m = b.manifest;
  m.set("format", std::string("xood-network"));
  m.set("input_shape", join_shape(net.input_shape()));
  m.set("num_classes", static_cast<std::uint64_t>(net.num_classes()));
  m.set("layer_count", static_cast<std::uint64_t>(net.layers().size()));
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    const std::string p = "layer." + std::to_string(i) + ".";
    m.set(p + "kind", to_string(l.kind));
    switch (l.kind) {
      case LayerKind::Conv2d:
        m.set(p + "stride", l.stride);
        m.set(p + "padding", l.padding);
        [[fallthrough]];
      case LayerKind::Dense:
        b.add(p + "weight", l.weights);
        b.add(p + "bias", Tensor({static_cast<std::uint32_t>(l.bias.size())}, l.bias));
        break;
      case LayerKind::MaxPool2d:
        m.set(p + "window", l.window);
        m.set(p + "stride", l.stride);
        break;
      default: break;
    }
  }
  for (const auto& [k, v] : net.metadata().entries()) m.set("meta." + k, v);
  return b;
}

Network network_from_bundle(const Bundle& b) {
  const auto& m = b.manifest;
  if (m.get("format") != "xood-network") throw FormatError("not a network manifest", 0);
  const auto count = m.get_uint("layer_count");
  std::vector<LayerSpec> layers;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    LayerSpec l;
    l.kind = parse_layer_kind(m.get(p + "kind"));
    switch (l.kind) {
      case LayerKind::Conv2d:
        l.stride = static_cast<std::uint32_t>(m.get_uint(p + "stride"));
        l.padding = static_cast<std::uint32_t>(m.get_uint(p + "padding"));
        [[fallthrough]];
      case LayerKind::Dense: {
        l.weights = b.blob(p + "weight");
        const auto& bias = b.blob(p + "bias");
        l.bias.assign(bias.storage().begin(), bias.storage().end());
        break;
      }
      case LayerKind::MaxPool2d:
        l.window = static_cast<std::uint32_t>(m.get_uint(p + "window"));
        l.stride = static_cast<std::uint32_t>(m.get_uint(p + "stride"));
        break;
      default: break;
    }
    layers.push_back(std::move(l));
  }
  Network net(parse_shape(m.get("input_shape")), std::move(layers));
  if (net.num_classes() != m.get_uint("num_classes")) {
    throw FormatError("num_classes does not match the layer graph", 0);
  }
  for (const auto& [k, v] : m.entries()) {
    if (k.rfind("meta.", 0) == 0) net.metadata().set(k.substr(5), v);
  }
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  write_bundle(path, network_to_bundle(net));
}

Network load_network(const std::filesystem::path& path) {
  return network_from_bundle(read_bundle(path, "XNET"));
}

}  // namespace xood

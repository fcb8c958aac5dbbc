#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xood/io.hpp"
#include "xood/tensor.hpp"

namespace xood {

enum class LayerKind { Conv2d, Dense, Relu, MaxPool2d, Flatten, Softmax };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  Tensor weights;  // Conv2d: [F, C, kh, kw]; Dense: [D, K]
  std::vector<float> bias;
  std::uint32_t stride = 1;
  std::uint32_t padding = 0;
  std::uint32_t window = 2;

  static LayerSpec conv2d(Tensor kernel, std::vector<float> bias, std::uint32_t stride = 1,
                          std::uint32_t padding = 0);
  static LayerSpec dense(Tensor weights, std::vector<float> bias);
  static LayerSpec relu() { return of(LayerKind::Relu); }
  static LayerSpec maxpool2d(std::uint32_t window, std::uint32_t stride);
  static LayerSpec flatten() { return of(LayerKind::Flatten); }
  static LayerSpec softmax() { return of(LayerKind::Softmax); }
  static LayerSpec of(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    return s;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// The classifier: an ordered layer list over inputs of shape [C, H, W].
/// Shape compatibility is checked on construction; the last layer must
/// produce [N, K].
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::vector<LayerSpec>& mutable_layers() noexcept { return layers_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  /// Positions of the Relu layers, in order.
  const std::vector<std::size_t>& activation_indices() const noexcept { return activations_; }
  /// r, the number of activation layers.
  std::size_t activation_count() const noexcept { return activations_.size(); }

  /// Free-form key/value notes stored alongside the weights.
  Manifest& metadata() noexcept { return metadata_; }
  const Manifest& metadata() const noexcept { return metadata_; }

  bool same_weights(const Network& other) const {
    return input_shape_ == other.input_shape_ && layers_ == other.layers_;
  }

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::size_t num_classes_ = 0;
  std::vector<std::size_t> activations_;
  Manifest metadata_;
};

/// Pre-activation inputs recorded during one forward pass.
struct TapTrace {
  std::vector<Tensor> taps;  // one per activation layer, in network order
  Tensor logits;             // [N, K]
  Tensor probabilities;      // [N, K]
};

struct ForwardResult {
  std::vector<std::uint32_t> predictions;
  TapTrace trace;

  const Tensor& probabilities() const { return trace.probabilities; }
};

/// Runs the network, capturing the tensor fed into every Relu before it is
/// applied. Predictions are the argmax of the logits, lowest class id on ties.
ForwardResult forward_with_taps(const Network& net, const Tensor& batch);

/// Same predictions/logits/probabilities, without recording taps.
ForwardResult forward(const Network& net, const Tensor& batch);

std::vector<std::uint32_t> argmax_rows(const Tensor& scores);

struct TrainConfig {
  int epochs = 5;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Network network;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// conv(8,3x3)-relu-maxpool(2)-conv(16,3x3)-relu-maxpool(2)-flatten-dense(64)-relu-dense(K)-softmax,
/// weights uniform(-s, s) with s = sqrt(1 / fan_in), zero biases.
Network make_reference_cnn(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed);

/// Plain mini-batch SGD on softmax cross-entropy. The network's last layer
/// must be Softmax. Throws TrainingDivergedError on a non-finite loss.
TrainResult train(Network net, const Tensor& images, std::span<const std::uint32_t> labels,
                  const TrainConfig& config);

TrainResult train_reference_cnn(const Tensor& images, std::span<const std::uint32_t> labels,
                                std::size_t num_classes, const TrainConfig& config);

Bundle network_to_bundle(const Network& net);
Network network_from_bundle(const Bundle& bundle);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace xood

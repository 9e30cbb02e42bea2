#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "protonet/checkpoint.hpp"
#include "protonet/ops.hpp"
#include "protonet/rng.hpp"
#include "protonet/tensor.hpp"

namespace protonet {

struct DenseLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

struct ReluLayer {};

// conv3x3 (same padding) -> batchnorm -> relu -> maxpool 2x2
struct ConvBlock {
  Tensor kernels;  // [filters x in_channels x 3 x 3]
  Tensor gamma;
  Tensor beta;
  BatchNormState bn;
};

struct FlattenLayer {};

// Bias-free linear map, x -> x W.
struct LinearMapLayer {
  Tensor weight;  // [in x out]
};

using Layer = std::variant<DenseLayer, ReluLayer, ConvBlock, FlattenLayer, LinearMapLayer>;

/// Ordered layer stack mapping a batch [B, input_shape...] to [B x M].
///
/// Presets:
///   "omniglot-conv"          four 64-filter conv blocks on [C x H x W] images
///   "mlp:<d0>-<d1>-...-<dn>" dense layers with ReLU between them (none after
///                            the last); d0 must equal the flattened input size
///   "cub-linear:<in>-<out>"  one bias-free linear map
///
/// Dense and conv weights start uniform in +-sqrt(6 / (fan_in + fan_out));
/// biases and batchnorm shifts start at zero, batchnorm scales at one.
class EmbeddingNet {
 public:
  static EmbeddingNet from_preset(std::string_view preset, const Shape& input_shape, Rng& rng);
  static EmbeddingNet mlp(const std::vector<std::size_t>& dims, Rng& rng);
  static EmbeddingNet conv(const Shape& input_shape, std::size_t filters, std::size_t blocks, Rng& rng);
  static EmbeddingNet linear_map(std::size_t in, std::size_t out, Rng& rng);

  /// Forward pass that records on the tape. In training mode batchnorm uses
  /// batch statistics and updates its running statistics.
  Tensor forward(const Tensor& batch);

  /// Evaluation-mode forward without gradient recording. Does not mutate the
  /// network and may run concurrently with other embed() calls.
  Tensor embed(const Tensor& batch) const;

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  std::vector<Tensor> parameters() const;
  // Parameters plus batchnorm running statistics, in a fixed order.
  std::vector<NamedTensor> state() const;
  // Copies values by name; every entry of state() must be present with the
  // same shape (LoadError otherwise).
  void load_state(const std::vector<NamedTensor>& tensors, const std::string& prefix = "");

  // Independent copy: no storage shared with this network.
  EmbeddingNet clone() const;

  const Shape& input_shape() const { return input_shape_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::string& preset() const { return preset_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  Tensor run(const Tensor& batch, bool training);

  std::vector<Layer> layers_;
  Shape input_shape_;
  std::size_t output_dim_ = 0;
  std::string preset_;
  bool training_ = true;
};

}  // namespace protonet

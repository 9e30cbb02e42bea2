#include "protonet/embedding.hpp"

#include <charconv>
#include <cmath>

#include "protonet/error.hpp"

namespace protonet {
namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(values), true);
}

std::vector<std::size_t> parse_dims(std::string_view text, std::string_view preset) {
  std::vector<std::size_t> dims;
  while (!text.empty()) {
    const auto dash = text.find('-');
    const auto tok = text.substr(0, dash);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || v == 0) {
      throw ContractError("bad dimension \"" + std::string(tok) + "\" in preset \"" + std::string(preset) + "\"");
    }
    dims.push_back(v);
    if (dash == std::string_view::npos) break;
    text = text.substr(dash + 1);
  }
  return dims;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

EmbeddingNet EmbeddingNet::mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw ContractError("mlp needs at least an input and an output dimension");
  EmbeddingNet net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (i > 0) net.layers_.emplace_back(ReluLayer{});
    net.layers_.emplace_back(
        DenseLayer{glorot({dims[i], dims[i + 1]}, dims[i], dims[i + 1], rng), Tensor::zeros({dims[i + 1]}, true)});
  }
  net.input_shape_ = {dims.front()};
  net.output_dim_ = dims.back();
  net.preset_ = "mlp:";
  for (std::size_t i = 0; i < dims.size(); ++i) net.preset_ += (i ? "-" : "") + std::to_string(dims[i]);
  return net;
}

EmbeddingNet EmbeddingNet::conv(const Shape& input_shape, std::size_t filters, std::size_t blocks, Rng& rng) {
  Shape chw = input_shape;
  if (chw.size() == 2) chw.insert(chw.begin(), 1);
  if (chw.size() != 3) throw ContractError("conv embedding expects [C x H x W] input, got " + shape_str(input_shape));
  EmbeddingNet net;
  std::size_t channels = chw[0], h = chw[1], w = chw[2];
  for (std::size_t b = 0; b < blocks; ++b) {
    ConvBlock block{glorot({filters, channels, 3, 3}, channels * 9, filters * 9, rng),
                    Tensor::full({filters}, 1.0, true), Tensor::zeros({filters}, true), BatchNormState(filters)};
    net.layers_.emplace_back(std::move(block));
    channels = filters;
    h = pooled_extent(h);
    w = pooled_extent(w);
  }
  net.layers_.emplace_back(FlattenLayer{});
  net.input_shape_ = input_shape;
  net.output_dim_ = channels * h * w;
  net.preset_ = "omniglot-conv";
  return net;
}

EmbeddingNet EmbeddingNet::linear_map(std::size_t in, std::size_t out, Rng& rng) {
  EmbeddingNet net;
  net.layers_.emplace_back(LinearMapLayer{glorot({in, out}, in, out, rng)});
  net.input_shape_ = {in};
  net.output_dim_ = out;
  net.preset_ = "cub-linear:" + std::to_string(in) + "-" + std::to_string(out);
  return net;
}

EmbeddingNet EmbeddingNet::from_preset(std::string_view preset, const Shape& input_shape, Rng& rng) {
  const auto flat = shape_numel(input_shape);
  if (preset == "omniglot-conv") return conv(input_shape, 64, 4, rng);
  if (preset.starts_with("mlp:")) {
    auto dims = parse_dims(preset.substr(4), preset);
    if (dims.front() != flat) {
      throw ContractError("preset \"" + std::string(preset) + "\" expects input size " + std::to_string(dims.front()) +
                          ", data has " + std::to_string(flat));
    }
    return mlp(dims, rng);
  }
  if (preset.starts_with("cub-linear:")) {
    auto dims = parse_dims(preset.substr(11), preset);
    if (dims.size() != 2) throw ContractError("cub-linear preset takes <in>-<out>");
    if (dims[0] != flat) {
      throw ContractError("preset \"" + std::string(preset) + "\" expects input size " + std::to_string(dims[0]) +
                          ", data has " + std::to_string(flat));
    }
    return linear_map(dims[0], dims[1], rng);
  }
  throw ContractError("unknown embedding preset \"" + std::string(preset) + "\"");
}

Tensor EmbeddingNet::run(const Tensor& batch, bool training) {
  if (batch.rank() < 1 || batch.numel() != batch.dim(0) * shape_numel(input_shape_)) {
    throw DimensionError("embedding expects [B, " + shape_str(input_shape_) + "], got " + shape_str(batch.shape()));
  }
  const std::size_t n = batch.dim(0);
  Tensor x = batch;
  bool spatial = std::holds_alternative<ConvBlock>(layers_.front());
  if (spatial) {
    Shape chw = input_shape_;
    if (chw.size() == 2) chw.insert(chw.begin(), 1);
    x = reshape(x, {n, chw[0], chw[1], chw[2]});
  } else {
    x = reshape(x, {n, shape_numel(input_shape_)});
  }
  for (auto& layer : layers_) {
    x = std::visit(Overloaded{
                       [&](DenseLayer& l) { return add_row_bias(matmul(x, l.weight), l.bias); },
                       [&](ReluLayer&) { return relu(x); },
                       [&](ConvBlock& l) {
                         auto y = batchnorm(conv2d(x, l.kernels), l.gamma, l.beta, l.bn, training);
                         return maxpool2d(relu(y));
                       },
                       [&](FlattenLayer&) { return reshape(x, {n, x.numel() / n}); },
                       [&](LinearMapLayer& l) { return matmul(x, l.weight); },
                   },
                   layer);
  }
  return x;
}

Tensor EmbeddingNet::forward(const Tensor& batch) { return run(batch, training_); }

Tensor EmbeddingNet::embed(const Tensor& batch) const {
  NoGradGuard guard;
  // Evaluation mode reads the running statistics only, so the const_cast
  // never results in a write.
  return const_cast<EmbeddingNet*>(this)->run(batch, false);
}

std::vector<Tensor> EmbeddingNet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const DenseLayer& l) {
                     out.push_back(l.weight);
                     out.push_back(l.bias);
                   },
                   [&](const ConvBlock& l) {
                     out.push_back(l.kernels);
                     out.push_back(l.gamma);
                     out.push_back(l.beta);
                   },
                   [&](const LinearMapLayer& l) { out.push_back(l.weight); },
                   [](const auto&) {},
               },
               layer);
  }
  return out;
}

std::vector<NamedTensor> EmbeddingNet::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    std::visit(Overloaded{
                   [&](const DenseLayer& l) {
                     out.push_back({p + "weight", l.weight});
                     out.push_back({p + "bias", l.bias});
                   },
                   [&](const ConvBlock& l) {
                     out.push_back({p + "kernels", l.kernels});
                     out.push_back({p + "bn.gamma", l.gamma});
                     out.push_back({p + "bn.beta", l.beta});
                     out.push_back({p + "bn.running_mean", l.bn.running_mean});
                     out.push_back({p + "bn.running_var", l.bn.running_var});
                   },
                   [&](const LinearMapLayer& l) { out.push_back({p + "weight", l.weight}); },
                   [](const auto&) {},
               },
               layers_[i]);
  }
  return out;
}

void EmbeddingNet::load_state(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (auto& [name, target] : state()) {
    const auto full = prefix + name;
    const NamedTensor* found = nullptr;
    for (const auto& t : tensors)
      if (t.name == full) found = &t;
    if (!found) throw LoadError("checkpoint is missing tensor \"" + full + "\"");
    if (found->tensor.shape() != target.shape()) {
      throw LoadError("tensor \"" + full + "\" has shape " + shape_str(found->tensor.shape()) + ", expected " +
                      shape_str(target.shape()));
    }
    auto dst = Tensor(target).mutable_data();
    const auto src = found->tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

EmbeddingNet EmbeddingNet::clone() const {
  EmbeddingNet copy = *this;
  auto dup = [](const Tensor& t) {
    auto d = t.detach();
    d.set_requires_grad(t.requires_grad());
    return d;
  };
  for (auto& layer : copy.layers_) {
    std::visit(Overloaded{
                   [&](DenseLayer& l) {
                     l.weight = dup(l.weight);
                     l.bias = dup(l.bias);
                   },
                   [&](ConvBlock& l) {
                     l.kernels = dup(l.kernels);
                     l.gamma = dup(l.gamma);
                     l.beta = dup(l.beta);
                     l.bn.running_mean = dup(l.bn.running_mean);
                     l.bn.running_var = dup(l.bn.running_var);
                   },
                   [&](LinearMapLayer& l) { l.weight = dup(l.weight); },
                   [](auto&) {},
               },
               layer);
  }
  return copy;
}

}  // namespace protonet

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protonet/tensor.hpp"

namespace protonet {

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  // Decoupled shrinkage: param <- param - learning_rate * weight_decay * param.
  double weight_decay = 0.0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Moment buffers are allocated on the first call; afterwards their
/// sizes must keep matching the parameters (ContractError otherwise).
void adam_step(std::span<Tensor> params, AdamState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace protonet

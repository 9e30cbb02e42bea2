#include "protonet/adam.hpp"

#include <cmath>
#include <string>

#include "protonet/error.hpp"

namespace protonet {

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (!(state.learning_rate > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  if (state.m.empty() && state.v.empty() && state.step_count == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw ContractError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double lr = state.learning_rate;
  const double shrink = lr * state.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto values = p.mutable_data();
    const auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      if (shrink != 0.0) values[j] -= shrink * values[j];
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace protonet

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "protonet/tensor.hpp"

namespace protonet {

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise this many coordinates per tensor,
  // drawn without replacement.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // Kink handling for ReLU / max-pool networks. When the forward and
  // backward one-sided differences at a coordinate disagree by more than
  // kink_ratio * (|fwd| + |bwd|), a non-differentiable point lies within the
  // step; the coordinate is re-measured with the step divided by 10, up to
  // `kink_refinements` times, and left out if it never settles. 0 disables.
  std::size_t kink_refinements = 0;
  double kink_ratio = 1e-4;
};

struct GradCheckResult {
  // Worst per-tensor relative error |g_a - g_n| / (|g_a| + |g_n|) over the
  // checked coordinates. The denominator is floored at 1e-6 of the same sum
  // over all tensors, so a tensor whose true gradient is zero is measured
  // against the gradient scale of the whole model; absolute error when
  // everything is below 1e-10.
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t coordinates_checked = 0;
  std::size_t coordinates_refined = 0;  // measured with a reduced step
  std::size_t coordinates_skipped = 0;  // kink within every tried step
};

/// Compares the reverse-mode gradient of `loss_fn` w.r.t. every tensor in
/// `params` with central finite differences. The analytic gradients are
/// computed from a fresh backward pass; existing gradients are zeroed.
GradCheckResult check_gradients(std::span<Tensor> params, const std::function<Tensor()>& loss_fn,
                                const GradCheckOptions& options = {});

}  // namespace protonet

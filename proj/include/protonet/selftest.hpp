#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protonet/tensor.hpp"

namespace protonet {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest error observed
  std::string detail;
};

/// Episode-loss gradients of a fresh `preset` network against central finite
/// differences, one check per seed. `coords_per_tensor` = 0 checks every
/// coordinate.
CheckResult check_episode_gradients(const std::string& preset, const Shape& input_shape,
                                    const std::vector<std::uint64_t>& seeds, double tolerance,
                                    std::size_t coords_per_tensor = 0, double step = 1e-5);

/// Matching-net vs prototype posteriors on random 1-shot episodes.
CheckResult check_one_shot_equivalence(std::size_t instances, double tolerance, std::uint64_t seed);

/// softmax(Wz + b) vs the squared-Euclidean prototype posterior.
CheckResult check_linear_equivalence(std::size_t instances, double tolerance, std::uint64_t seed);

/// Uniform-weight Gaussian mixture posterior vs the prototype posterior.
CheckResult check_mixture_equivalence(std::size_t instances, double tolerance, std::uint64_t seed);

/// The mean minimizes total divergence for squared Euclidean and diagonal
/// Mahalanobis on random point sets.
CheckResult check_mean_minimizer(std::size_t point_sets, std::size_t perturbations, std::uint64_t seed);

/// The fast suites used by `selftest`.
std::vector<CheckResult> run_selftest();

}  // namespace protonet

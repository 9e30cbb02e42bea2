#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protonet/rng.hpp"
#include "protonet/tensor.hpp"

namespace protonet {

enum class DistanceKind { squared_euclidean, cosine, bregman, mahalanobis_diag };

/// Strictly convex generator phi with its gradient, for Bregman divergences.
struct BregmanGenerator {
  std::string name;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
};

// phi(z) = |z|^2
BregmanGenerator squared_norm_generator();
// phi(z) = sum_i w_i z_i^2, w_i > 0
BregmanGenerator weighted_squared_norm_generator(std::vector<double> weights);
// phi(z) = sum_i z_i log z_i on the positive orthant (generalized I-divergence)
BregmanGenerator negative_entropy_generator();

BregmanGenerator builtin_generator(std::string_view name);

/// A distance d(z, z') between embeddings. Value type; cheap to copy.
class DistanceFn {
 public:
  static DistanceFn squared_euclidean();
  static DistanceFn cosine();
  static DistanceFn bregman(BregmanGenerator generator);
  // Empty weights mean unit weight on every coordinate.
  static DistanceFn mahalanobis_diag(std::vector<double> weights);

  /// Accepts "sq_euclidean", "cosine", "mahalanobis_diag",
  /// "mahalanobis_diag:w1,w2,...", and "bregman:<generator>" with generator
  /// one of "sq_norm" or "neg_entropy".
  static DistanceFn parse(std::string_view name);

  DistanceKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  // Every kind except cosine is a Bregman divergence.
  bool is_bregman() const { return kind_ != DistanceKind::cosine; }
  const std::vector<double>& weights() const { return weights_; }

  double operator()(std::span<const double> z, std::span<const double> z_prime) const;

 private:
  DistanceKind kind_ = DistanceKind::squared_euclidean;
  std::string name_;
  std::vector<double> weights_;
  std::shared_ptr<const BregmanGenerator> generator_;
};

double distance(const DistanceFn& d, std::span<const double> z, std::span<const double> z_prime);

/// Distance matrix [Q x K] between the rows of `queries` [Q x M] and
/// `prototypes` [K x M]. Squared Euclidean, cosine and diagonal Mahalanobis
/// are recorded on the gradient tape; a general Bregman divergence is
/// evaluated from its generator and is not differentiable (UnsupportedError
/// if either operand needs a gradient while recording).
Tensor pairwise_distances(const DistanceFn& d, const Tensor& queries, const Tensor& prototypes);

struct PerturbationProbe {
  double candidate_total = 0.0;       // sum_i d(points_i, candidate)
  double best_perturbed_total = 0.0;  // lowest total over the perturbations
  bool candidate_is_minimal = true;
};

/// Random search around `candidate`: `trials` perturbations drawn uniformly
/// from the ball of `radius`. Works for any distance, Bregman or not.
PerturbationProbe probe_perturbations(const DistanceFn& d, const Tensor& points,
                                      std::span<const double> candidate, std::size_t trials, double radius,
                                      Rng& rng);

/// True iff no perturbation lowers the total divergence from `points` to
/// `candidate`. Defined for Bregman divergences only; cosine raises
/// UnsupportedError.
bool mean_minimizer_check(const DistanceFn& d, const Tensor& points, std::span<const double> candidate,
                          std::size_t trials, double radius, Rng& rng);

}  // namespace protonet

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "protonet/distances.hpp"
#include "protonet/embedding.hpp"
#include "protonet/episodes.hpp"
#include "protonet/tensor.hpp"

namespace protonet {

/// Class prototypes c_k (rows of `prototypes`, [K x M]) and the distance
/// used against them. `prototypes` may carry gradient history.
struct PrototypeSet {
  Tensor prototypes;
  std::vector<std::string> class_ids;
  DistanceFn distance;

  std::size_t size() const { return prototypes.dim(0); }
};

struct ClassPosterior {
  std::vector<double> probabilities;

  std::size_t argmax() const;
};

/// Exponential-family mixture with means mu_k (rows of `means`), strictly
/// positive weights pi_k summing to one, and the Bregman divergence tied to
/// the family.
struct MixtureModel {
  Tensor means;
  std::vector<double> weights;
  DistanceFn divergence;
};

struct LinearHead {
  Tensor weights;             // [K x M], row k = 2 c_k
  std::vector<double> bias;   // b_k = -c_k . c_k

  ClassPosterior posterior(std::span<const double> z) const;
};

/// softmax(-distances) with max subtraction.
ClassPosterior softmax_of_negated(std::span<const double> distances);

/// Row means of consecutive blocks of `per_class` rows: [K*S x M] -> [K x M].
/// Differentiable.
Tensor class_means(const Tensor& embedded, std::size_t n_classes, std::size_t per_class);

/// Prototype per episode class: mean of the embedded support points.
PrototypeSet compute_prototypes(EmbeddingNet& embed, const Episode& episode,
                                const DistanceFn& distance = DistanceFn::squared_euclidean());

/// p(k | z) = exp(-d(z, c_k)) / sum_k' exp(-d(z, c_k')).
ClassPosterior classify_query(const PrototypeSet& protos, std::span<const double> embedded_query);

/// Mean over query points of -log p(true class), with prototypes and queries
/// embedded in one forward pass. Differentiable w.r.t. the network.
Tensor episode_loss(EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance);

/// Matching-network counterpart of episode_loss: attention over individual
/// support points, class probability = summed attention of its points.
Tensor matching_episode_loss(EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance);

/// Attention a_i = softmax_i(-d(z, s_i)) over the embedded support rows;
/// p(k) = sum of a_i over support points labelled k.
ClassPosterior matching_posterior(const Tensor& embedded_support, std::span<const std::size_t> support_labels,
                                  std::size_t n_way, const DistanceFn& distance, std::span<const double> z);

/// Matching-network prediction for one raw query input, embedding support
/// and query with the same network in evaluation mode.
ClassPosterior matching_net_predict(const EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance,
                                    const Tensor& query);

/// Linear reinterpretation of the squared-Euclidean prototype classifier.
/// UnsupportedError for any other distance.
LinearHead linear_head(const PrototypeSet& protos);

/// p(y = k | z) = pi_k exp(-d(z, mu_k)) / sum_k' pi_k' exp(-d(z, mu_k')).
ClassPosterior mixture_posterior(const MixtureModel& model, std::span<const double> z);

/// c_k = g(v_k) / |g(v_k)| for the rows v_k of `meta_vectors` [K x A].
/// Normalization is part of the recorded graph.
PrototypeSet zero_shot_prototypes(EmbeddingNet& meta_embed, const Tensor& meta_vectors,
                                  const DistanceFn& distance = DistanceFn::squared_euclidean(),
                                  std::vector<std::string> class_ids = {});

/// Zero-shot episode loss: queries embedded by `query_embed`, prototypes from
/// `meta_embed` applied to the per-class meta-data rows (episode class order).
Tensor zero_shot_episode_loss(EmbeddingNet& query_embed, EmbeddingNet& meta_embed, const Episode& episode,
                              const Tensor& episode_meta_vectors, const DistanceFn& distance);

}  // namespace protonet

#include "protonet/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protonet/error.hpp"
#include "protonet/ops.hpp"

namespace protonet {

std::size_t ClassPosterior::argmax() const {
  return static_cast<std::size_t>(
      std::distance(probabilities.begin(), std::max_element(probabilities.begin(), probabilities.end())));
}

ClassPosterior softmax_of_negated(std::span<const double> distances) {
  if (distances.empty()) throw ContractError("softmax over an empty set");
  const double lo = *std::min_element(distances.begin(), distances.end());
  ClassPosterior post;
  post.probabilities.resize(distances.size());
  double total = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    post.probabilities[k] = std::exp(lo - distances[k]);
    total += post.probabilities[k];
  }
  for (auto& p : post.probabilities) p /= total;
  return post;
}

ClassPosterior LinearHead::posterior(std::span<const double> z) const {
  const auto k = weights.dim(0), m = weights.dim(1);
  if (z.size() != m) throw DimensionError("linear head: query dimension mismatch");
  // logits l_k = w_k . z + b_k; softmax(l) = softmax_of_negated(-l)
  std::vector<double> neg(k);
  for (std::size_t i = 0; i < k; ++i) {
    double s = bias[i];
    for (std::size_t j = 0; j < m; ++j) s += weights.at(i, j) * z[j];
    neg[i] = -s;
  }
  return softmax_of_negated(neg);
}

Tensor class_means(const Tensor& embedded, std::size_t n_classes, std::size_t per_class) {
  if (per_class == 0) throw ContractError("class_means: empty support set");
  if (embedded.rank() != 2 || embedded.dim(0) != n_classes * per_class) {
    throw DimensionError("class_means: expected " + std::to_string(n_classes * per_class) + " rows, got " +
                         shape_str(embedded.shape()));
  }
  std::vector<double> avg(n_classes * n_classes * per_class, 0.0);
  const double w = 1.0 / static_cast<double>(per_class);
  for (std::size_t k = 0; k < n_classes; ++k)
    for (std::size_t i = 0; i < per_class; ++i) avg[k * n_classes * per_class + k * per_class + i] = w;
  return matmul(Tensor({n_classes, n_classes * per_class}, std::move(avg)), embedded);
}

PrototypeSet compute_prototypes(EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance) {
  if (episode.n_support == 0 || !episode.support.defined()) {
    throw ContractError("compute_prototypes: episode has an empty support set");
  }
  auto z = embed.forward(episode.support);
  return {class_means(z, episode.n_way, episode.n_support), episode.class_ids, distance};
}

ClassPosterior classify_query(const PrototypeSet& protos, std::span<const double> z) {
  std::vector<double> d(protos.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = protos.distance(z, protos.prototypes.row(k));
  return softmax_of_negated(d);
}

namespace {

Tensor concat_inputs(const Tensor& a, const Tensor& b) {
  std::vector<double> values(a.data().begin(), a.data().end());
  values.insert(values.end(), b.data().begin(), b.data().end());
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  return Tensor(std::move(shape), std::move(values));
}

std::vector<std::size_t> identity_groups(std::size_t n) {
  std::vector<std::size_t> g(n);
  std::iota(g.begin(), g.end(), 0);
  return g;
}

}  // namespace

Tensor episode_loss(EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance) {
  if (episode.n_support == 0) throw ContractError("episode_loss: episode has no support set");
  const auto n_s = episode.n_way * episode.n_support;
  const auto n_q = episode.n_way * episode.n_query;
  auto z = embed.forward(concat_inputs(episode.support, episode.query));
  auto protos = class_means(slice_rows(z, 0, n_s), episode.n_way, episode.n_support);
  auto queries = slice_rows(z, n_s, n_s + n_q);
  auto logits = negate(pairwise_distances(distance, queries, protos));
  const auto groups = identity_groups(episode.n_way);
  return grouped_softmax_nll(logits, groups, episode.query_labels);
}

Tensor matching_episode_loss(EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance) {
  if (episode.n_support == 0) throw ContractError("matching_episode_loss: episode has no support set");
  const auto n_s = episode.n_way * episode.n_support;
  const auto n_q = episode.n_way * episode.n_query;
  auto z = embed.forward(concat_inputs(episode.support, episode.query));
  auto support = slice_rows(z, 0, n_s);
  auto queries = slice_rows(z, n_s, n_s + n_q);
  auto logits = negate(pairwise_distances(distance, queries, support));
  return grouped_softmax_nll(logits, episode.support_labels, episode.query_labels);
}

ClassPosterior matching_posterior(const Tensor& embedded_support, std::span<const std::size_t> support_labels,
                                  std::size_t n_way, const DistanceFn& distance, std::span<const double> z) {
  const auto n = embedded_support.dim(0);
  if (support_labels.size() != n) throw DimensionError("matching_posterior: one label per support row required");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = distance(z, embedded_support.row(i));
  const auto attention = softmax_of_negated(d);
  ClassPosterior post;
  post.probabilities.assign(n_way, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (support_labels[i] >= n_way) throw ContractError("matching_posterior: label out of range");
    post.probabilities[support_labels[i]] += attention.probabilities[i];
  }
  return post;
}

ClassPosterior matching_net_predict(const EmbeddingNet& embed, const Episode& episode, const DistanceFn& distance,
                                    const Tensor& query) {
  if (episode.n_support == 0) throw ContractError("matching_net_predict: episode has no support set");
  if (query.numel() != shape_numel(embed.input_shape())) {
    throw DimensionError("matching_net_predict: expected a single query of shape " + shape_str(embed.input_shape()));
  }
  Shape shape{1};
  shape.insert(shape.end(), embed.input_shape().begin(), embed.input_shape().end());
  const Tensor batch(std::move(shape), std::vector<double>(query.data().begin(), query.data().end()));
  const auto support = embed.embed(episode.support);
  const auto z = embed.embed(batch);
  return matching_posterior(support, episode.support_labels, episode.n_way, distance, z.row(0));
}

LinearHead linear_head(const PrototypeSet& protos) {
  if (protos.distance.kind() != DistanceKind::squared_euclidean) {
    throw UnsupportedError("linear_head: only defined for squared Euclidean distance, got " + protos.distance.name());
  }
  const auto k = protos.prototypes.dim(0), m = protos.prototypes.dim(1);
  LinearHead head{Tensor::zeros({k, m}), std::vector<double>(k, 0.0)};
  auto w = head.weights.mutable_data();
  for (std::size_t i = 0; i < k; ++i) {
    const auto c = protos.prototypes.row(i);
    double cc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      w[i * m + j] = 2.0 * c[j];
      cc += c[j] * c[j];
    }
    head.bias[i] = -cc;
  }
  return head;
}

ClassPosterior mixture_posterior(const MixtureModel& model, std::span<const double> z) {
  const auto k = model.means.dim(0);
  if (model.weights.size() != k) throw DimensionError("mixture_posterior: one weight per component required");
  double total = 0.0;
  for (double w : model.weights) {
    if (!(w > 0.0)) throw ContractError("mixture_posterior: mixture weights must be strictly positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractError("mixture_posterior: mixture weights must sum to one");
  // pi_k exp(-d_k) = exp(-(d_k - log pi_k))
  std::vector<double> shifted(k);
  for (std::size_t i = 0; i < k; ++i) shifted[i] = model.divergence(z, model.means.row(i)) - std::log(model.weights[i]);
  return softmax_of_negated(shifted);
}

PrototypeSet zero_shot_prototypes(EmbeddingNet& meta_embed, const Tensor& meta_vectors, const DistanceFn& distance,
                                  std::vector<std::string> class_ids) {
  if (meta_vectors.rank() != 2) throw DimensionError("zero_shot_prototypes: meta vectors must be [K x A]");
  return {normalize_rows(meta_embed.forward(meta_vectors)), std::move(class_ids), distance};
}

Tensor zero_shot_episode_loss(EmbeddingNet& query_embed, EmbeddingNet& meta_embed, const Episode& episode,
                              const Tensor& episode_meta_vectors, const DistanceFn& distance) {
  if (episode_meta_vectors.rank() != 2 || episode_meta_vectors.dim(0) != episode.n_way) {
    throw DimensionError("zero_shot_episode_loss: need one meta-data row per episode class");
  }
  auto protos = normalize_rows(meta_embed.forward(episode_meta_vectors));
  auto queries = query_embed.forward(episode.query);
  auto logits = negate(pairwise_distances(distance, queries, protos));
  const auto groups = identity_groups(episode.n_way);
  return grouped_softmax_nll(logits, groups, episode.query_labels);
}

}  // namespace protonet

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "protonet/error.hpp"
#include "protonet/rng.hpp"
#include "protonet/tensor.hpp"

namespace protonet {

struct ClassRecord {
  std::string id;
  // Flattened examples, each of size shape_numel(input_shape).
  std::vector<std::vector<double>> examples;
};

/// Classes of examples sharing one input shape. Immutable once built.
struct LabeledDataset {
  Shape input_shape;
  std::vector<ClassRecord> classes;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t example_size() const { return shape_numel(input_shape); }
  // Throws ContractError on duplicate ids or mis-sized examples.
  void validate() const;
};

struct EpisodeSpec {
  std::size_t n_way = 5;
  std::size_t n_support = 1;
  std::size_t n_query = 15;

  void validate() const;
};

/// One sampled task. Support and query rows are class-major: rows
/// [k * n_support, (k + 1) * n_support) of `support` belong to the k-th
/// selected class, whose episode-local label is k.
struct Episode {
  std::vector<std::string> class_ids;
  std::vector<std::size_t> class_indices;  // positions in the source dataset
  std::vector<std::vector<std::size_t>> support_examples;  // example indices per class
  std::vector<std::vector<std::size_t>> query_examples;
  std::size_t n_way = 0;
  std::size_t n_support = 0;
  std::size_t n_query = 0;
  Tensor support;  // [n_way * n_support, input_shape...]; undefined when n_support == 0
  Tensor query;    // [n_way * n_query, input_shape...]
  std::vector<std::size_t> support_labels;
  std::vector<std::size_t> query_labels;
};

/// Indices of `n` distinct elements of [0, pool_size), uniformly over
/// n-subsets, via a partial Fisher-Yates shuffle driven by `rng`.
std::vector<std::size_t> random_sample(std::size_t pool_size, std::size_t n, Rng& rng);

template <typename T>
std::vector<T> random_sample(std::span<const T> pool, std::size_t n, Rng& rng) {
  std::vector<T> out;
  out.reserve(n);
  for (auto i : random_sample(pool.size(), n, rng)) out.push_back(pool[i]);
  return out;
}

/// Picks n_way classes without replacement, then per class n_support support
/// examples and n_query query examples from the remainder.
Episode sample_episode(const LabeledDataset& data, const EpisodeSpec& spec, Rng& rng);

/// Episode with no support set: n_way classes and n_query queries each.
Episode sample_query_episode(const LabeledDataset& data, std::size_t n_way, std::size_t n_query, Rng& rng);

/// Stack examples into a [count, input_shape...] batch.
Tensor stack_examples(const LabeledDataset& data, std::span<const std::pair<std::size_t, std::size_t>> refs);

}  // namespace protonet

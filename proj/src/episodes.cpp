#include "protonet/episodes.hpp"

#include <numeric>
#include <unordered_set>

namespace protonet {

void LabeledDataset::validate() const {
  if (input_shape.empty()) throw ContractError("dataset: empty input shape");
  const auto size = example_size();
  std::unordered_set<std::string> ids;
  for (const auto& c : classes) {
    if (!ids.insert(c.id).second) throw ContractError("dataset: duplicate class id \"" + c.id + "\"");
    for (const auto& e : c.examples) {
      if (e.size() != size) {
        throw ContractError("dataset: class \"" + c.id + "\" has an example of " + std::to_string(e.size()) +
                            " values, expected " + std::to_string(size));
      }
    }
  }
}

void EpisodeSpec::validate() const {
  if (n_way == 0 || n_support == 0 || n_query == 0) {
    throw ContractError("episode spec: way, shot and query counts must be positive");
  }
}

std::vector<std::size_t> random_sample(std::size_t pool_size, std::size_t n, Rng& rng) {
  if (n > pool_size) {
    throw InsufficientDataError("random_sample: requested " + std::to_string(n) + " of " +
                                std::to_string(pool_size) + " elements");
  }
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.uniform_below(pool_size - i)]);
  idx.resize(n);
  return idx;
}

Tensor stack_examples(const LabeledDataset& data, std::span<const std::pair<std::size_t, std::size_t>> refs) {
  const auto size = data.example_size();
  std::vector<double> values;
  values.reserve(refs.size() * size);
  for (const auto& [cls, ex] : refs) {
    const auto& e = data.classes[cls].examples[ex];
    values.insert(values.end(), e.begin(), e.end());
  }
  Shape shape{refs.size()};
  shape.insert(shape.end(), data.input_shape.begin(), data.input_shape.end());
  return Tensor(std::move(shape), std::move(values));
}

namespace {

Episode sample_impl(const LabeledDataset& data, std::size_t n_way, std::size_t n_support, std::size_t n_query,
                    Rng& rng) {
  if (n_way > data.num_classes()) {
    throw InsufficientDataError("episode needs " + std::to_string(n_way) + " classes, dataset has " +
                                std::to_string(data.num_classes()));
  }
  Episode ep;
  ep.n_way = n_way;
  ep.n_support = n_support;
  ep.n_query = n_query;
  ep.class_indices = random_sample(data.num_classes(), n_way, rng);

  std::vector<std::pair<std::size_t, std::size_t>> support_refs, query_refs;
  for (std::size_t k = 0; k < n_way; ++k) {
    const auto cls = ep.class_indices[k];
    const auto& record = data.classes[cls];
    ep.class_ids.push_back(record.id);
    const auto available = record.examples.size();
    if (available < n_support + n_query) {
      throw InsufficientDataError("class \"" + record.id + "\" has " + std::to_string(available) +
                                  " examples, episode needs " + std::to_string(n_support + n_query));
    }
    // Support first, then queries from what is left.
    auto order = random_sample(available, n_support, rng);
    std::vector<char> taken(available, 0);
    for (auto i : order) taken[i] = 1;
    std::vector<std::size_t> rest;
    rest.reserve(available - n_support);
    for (std::size_t i = 0; i < available; ++i)
      if (!taken[i]) rest.push_back(i);
    auto query = random_sample(std::span<const std::size_t>(rest), n_query, rng);

    for (auto i : order) {
      support_refs.emplace_back(cls, i);
      ep.support_labels.push_back(k);
    }
    for (auto i : query) {
      query_refs.emplace_back(cls, i);
      ep.query_labels.push_back(k);
    }
    ep.support_examples.push_back(std::move(order));
    ep.query_examples.push_back(std::move(query));
  }
  if (n_support > 0) ep.support = stack_examples(data, support_refs);
  ep.query = stack_examples(data, query_refs);
  return ep;
}

}  // namespace

Episode sample_episode(const LabeledDataset& data, const EpisodeSpec& spec, Rng& rng) {
  spec.validate();
  return sample_impl(data, spec.n_way, spec.n_support, spec.n_query, rng);
}

Episode sample_query_episode(const LabeledDataset& data, std::size_t n_way, std::size_t n_query, Rng& rng) {
  if (n_way == 0 || n_query == 0) throw ContractError("query episode: way and query counts must be positive");
  return sample_impl(data, n_way, 0, n_query, rng);
}

}  // namespace protonet

#include "protonet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <functional>
#include <thread>

#include "protonet/adam.hpp"
#include "protonet/error.hpp"
#include "protonet/models.hpp"
#include "protonet/ops.hpp"
#include "protonet/stats.hpp"

namespace protonet {

namespace {

// Stream keys derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kValStream = 3;
constexpr std::uint64_t kEvalStream = 4;
constexpr std::uint64_t kMetaInitStream = 5;

}  // namespace

double lr_schedule(double initial_lr, std::size_t episode_index, std::size_t halving_period) {
  if (halving_period == 0) return initial_lr;
  return initial_lr * std::pow(0.5, static_cast<double>(episode_index / halving_period));
}

Head parse_head(const std::string& name) {
  if (name == "protonet") return Head::protonet;
  if (name == "matching") return Head::matching;
  throw ContractError("unknown head \"" + name + "\"");
}

const char* head_name(Head head) { return head == Head::protonet ? "protonet" : "matching"; }

std::vector<Tensor> Model::parameters() const {
  auto out = embed.parameters();
  if (meta_embed) {
    auto g = meta_embed->parameters();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

std::vector<NamedTensor> Model::state() const {
  std::vector<NamedTensor> out;
  for (auto& t : embed.state()) out.push_back({"f." + t.name, t.tensor});
  if (meta_embed) {
    for (auto& t : meta_embed->state()) out.push_back({"g." + t.name, t.tensor});
  }
  return out;
}

void Model::load_state(const std::vector<NamedTensor>& tensors) {
  embed.load_state(tensors, "f.");
  if (meta_embed) meta_embed->load_state(tensors, "g.");
}

namespace {

std::size_t test_count(std::size_t total, std::size_t train, std::size_t val) {
  if (train == 0 || train + val >= total) {
    throw ContractError("dataset split: train_classes must be positive and leave test classes (" +
                        std::to_string(train) + " train + " + std::to_string(val) + " val of " +
                        std::to_string(total) + ")");
  }
  return total - train - val;
}

std::size_t all_classes(const LabeledDataset& d) { return d.num_classes(); }
std::size_t all_classes(const AttributeDataset& d) { return d.features.num_classes(); }

template <typename D>
void split3(const D& all, std::size_t train, std::size_t val, D& out_train, D& out_val, D& out_test) {
  test_count(all_classes(all), train, val);
  auto [tr, rest] = split_classes(all, train);
  auto [va, te] = split_classes(rest, val);
  out_train = std::move(tr);
  out_val = std::move(va);
  out_test = std::move(te);
}


LabeledDataset maybe_rotate(LabeledDataset d, const std::vector<int>& rotations) {
  if (rotations.empty()) return d;
  return rotation_augment(d, rotations);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  const auto& src = config.dataset;
  PreparedData out;
  out.zero_shot = src.zero_shot();
  switch (src.type) {
    case DatasetType::synthetic: {
      auto gen = gen_gaussian_dataset(src.synthetic);
      split3(gen.data, src.train_classes, src.val_classes, out.train, out.val, out.test);
      const auto first_test = src.train_classes + src.val_classes;
      out.test_true_means.assign(gen.true_means.begin() + first_test, gen.true_means.end());
      out.noise_sigma = gen.noise_sigma;
      break;
    }
    case DatasetType::manifest: {
      if (!src.path.empty()) {
        split3(load_dataset(src.path), src.train_classes, src.val_classes, out.train, out.val, out.test);
      } else {
        out.train = load_dataset(src.train_path);
        out.test = load_dataset(src.test_path);
        if (!src.val_path.empty()) out.val = load_dataset(src.val_path);
      }
      out.train = maybe_rotate(std::move(out.train), src.rotations);
      if (out.val.num_classes() > 0) out.val = maybe_rotate(std::move(out.val), src.rotations);
      out.test = maybe_rotate(std::move(out.test), src.rotations);
      if (out.val.input_shape.empty()) out.val.input_shape = out.train.input_shape;
      break;
    }
    case DatasetType::synthetic_attributes: {
      auto gen = gen_attribute_dataset(src.attributes);
      if (src.standardize_attributes) standardize_attributes(gen);
      split3(gen, src.train_classes, src.val_classes, out.zs_train, out.zs_val, out.zs_test);
      break;
    }
    case DatasetType::attributes: {
      if (!src.path.empty()) {
        auto all = load_attribute_dataset(src.path);
        if (src.standardize_attributes) standardize_attributes(all);
        split3(all, src.train_classes, src.val_classes, out.zs_train, out.zs_val, out.zs_test);
      } else {
        out.zs_train = load_attribute_dataset(src.train_path);
        out.zs_test = load_attribute_dataset(src.test_path);
        if (!src.val_path.empty()) out.zs_val = load_attribute_dataset(src.val_path);
        if (src.standardize_attributes) {
          standardize_attributes(out.zs_train);
          standardize_attributes(out.zs_test);
          if (!src.val_path.empty()) standardize_attributes(out.zs_val);
        }
      }
      break;
    }
  }
  return out;
}

Model init_model(const ExperimentConfig& config, const PreparedData& data) {
  auto init_rng = Rng(config.seed).derive(kInitStream);
  Model m{EmbeddingNet::from_preset(config.embedding, data.input_shape(), init_rng), std::nullopt};
  if (data.zero_shot) {
    auto meta_rng = Rng(config.seed).derive(kMetaInitStream);
    m.meta_embed = EmbeddingNet::from_preset(config.meta_embedding, {data.zs_train.attribute_dim()}, meta_rng);
    if (m.meta_embed->output_dim() != m.embed.output_dim()) {
      throw ContractError("zero-shot embeddings disagree on output dimension (" +
                          std::to_string(m.embed.output_dim()) + " vs " +
                          std::to_string(m.meta_embed->output_dim()) + ")");
    }
  }
  return m;
}

namespace {

Tensor training_loss(Model& model, const PreparedData& data, const Episode& ep, const DistanceFn& distance,
                     Head head, bool validation) {
  if (data.zero_shot) {
    const auto& attrs = validation ? data.zs_val : data.zs_train;
    return zero_shot_episode_loss(model.embed, *model.meta_embed, ep, attrs.attribute_matrix(ep.class_indices),
                                  distance);
  }
  return head == Head::matching ? matching_episode_loss(model.embed, ep, distance)
                                : episode_loss(model.embed, ep, distance);
}

Episode training_episode(const PreparedData& data, const EpisodeSpec& spec, Rng& rng, bool validation) {
  if (data.zero_shot) {
    const auto& d = validation ? data.zs_val.features : data.zs_train.features;
    return sample_query_episode(d, spec.n_way, spec.n_query, rng);
  }
  return sample_episode(validation ? data.val : data.train, spec, rng);
}

void set_training(Model& model, bool training) {
  model.embed.set_training(training);
  if (model.meta_embed) model.meta_embed->set_training(training);
}

double validation_loss(Model& model, const PreparedData& data, const ExperimentConfig& config,
                       const DistanceFn& distance, Head head) {
  NoGradGuard guard;
  set_training(model, false);
  const auto base = Rng(config.seed).derive(kValStream);
  double total = 0.0;
  const auto n = config.early_stopping->val_episodes;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = base.derive(i);
    const auto ep = training_episode(data, config.train_spec, rng, true);
    total += training_loss(model, data, ep, distance, head, true).item();
  }
  set_training(model, true);
  return total / static_cast<double>(n);
}

std::vector<std::vector<double>> snapshot(const Model& model) {
  std::vector<std::vector<double>> out;
  for (const auto& t : model.state()) out.emplace_back(t.tensor.data().begin(), t.tensor.data().end());
  return out;
}

void restore(Model& model, const std::vector<std::vector<double>>& values) {
  auto st = model.state();
  for (std::size_t i = 0; i < st.size(); ++i) {
    auto dst = st[i].tensor.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const PreparedData& data) {
  config.validate();
  TrainResult result{init_model(config, data), {}, false, std::nullopt};
  auto& model = result.model;
  const auto distance = DistanceFn::parse(config.distance);
  const auto head = parse_head(config.head);
  auto params = model.parameters();
  AdamState adam;
  adam.learning_rate = config.initial_lr;
  adam.weight_decay = config.weight_decay;
  auto rng = Rng(config.seed).derive(kTrainStream);
  set_training(model, true);

  const bool early = config.early_stopping.has_value() && data.has_validation();
  std::size_t rounds_without_gain = 0;
  std::vector<std::vector<double>> best_state;

  for (std::size_t e = 0; e < config.max_episodes; ++e) {
    const double lr = lr_schedule(config.initial_lr, e, config.lr_halving_period);
    const auto ep = training_episode(data, config.train_spec, rng, false);
    double loss_value = 0.0;
    try {
      auto loss = training_loss(model, data, ep, distance, head, false);
      loss_value = loss.item();
      zero_grads(params);
      loss.backward();
    } catch (const NumericError& err) {
      throw NumericError("training diverged at episode " + std::to_string(e) + ": " + err.what());
    }
    adam.learning_rate = lr;
    adam_step(params, adam);
    result.log.push_back({e, loss_value, lr});

    if (early && (e + 1) % config.early_stopping->eval_every == 0) {
      const double v = validation_loss(model, data, config, distance, head);
      if (!result.best_val_loss || v < *result.best_val_loss) {
        result.best_val_loss = v;
        best_state = snapshot(model);
        rounds_without_gain = 0;
      } else if (++rounds_without_gain >= config.early_stopping->patience) {
        restore(model, best_state);
        result.stopped_early = true;
        break;
      }
    }
  }
  set_training(model, false);
  return result;
}

void write_training_log(std::ostream& os, std::span<const TrainLogRow> rows) {
  os << "episode,loss,lr\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.episode, r.loss, r.lr);
    os << buf;
  }
}

Episode eval_episode(const LabeledDataset& data, const EpisodeSpec& spec, std::uint64_t seed, std::size_t index) {
  auto rng = Rng(seed).derive(kEvalStream).derive(index);
  return sample_episode(data, spec, rng);
}

Episode zero_shot_eval_episode(const LabeledDataset& features, const EpisodeSpec& spec, std::uint64_t seed,
                               std::size_t index) {
  auto rng = Rng(seed).derive(kEvalStream).derive(index);
  return sample_query_episode(features, spec.n_way, spec.n_query, rng);
}

namespace {

double episode_accuracy(const Tensor& queries, std::span<const std::size_t> labels,
                        const std::function<ClassPosterior(std::span<const double>)>& predict) {
  std::size_t correct = 0;
  for (std::size_t q = 0; q < queries.dim(0); ++q) {
    if (predict(queries.row(q)).argmax() == labels[q]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(queries.dim(0));
}

// Runs fn(i) for i in [0, n), storing into out[i]; chunked over threads.
void parallel_episodes(std::size_t n, std::size_t threads, std::vector<double>& out,
                       const std::function<double(std::size_t)>& fn) {
  out.assign(n, 0.0);
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) out[i] = fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

EvalRow finish_row(std::vector<double> acc, std::chrono::steady_clock::time_point start) {
  EvalRow row;
  const auto s = summarize(acc);
  row.acc_mean = s.mean;
  row.ci95 = s.ci95;
  row.episodes = s.count;
  row.per_episode = std::move(acc);
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace

EvalRow evaluate(const EmbeddingNet& embed, const LabeledDataset& data, const EpisodeSpec& spec,
                 std::size_t n_episodes, const DistanceFn& distance, Head head, std::uint64_t seed,
                 std::size_t threads) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> acc;
  parallel_episodes(n_episodes, threads, acc, [&](std::size_t i) {
    NoGradGuard guard;
    const auto ep = eval_episode(data, spec, seed, i);
    const auto support = embed.embed(ep.support);
    const auto queries = embed.embed(ep.query);
    if (head == Head::matching) {
      return episode_accuracy(queries, ep.query_labels, [&](std::span<const double> z) {
        return matching_posterior(support, ep.support_labels, ep.n_way, distance, z);
      });
    }
    const PrototypeSet protos{class_means(support, ep.n_way, ep.n_support), ep.class_ids, distance};
    return episode_accuracy(queries, ep.query_labels,
                            [&](std::span<const double> z) { return classify_query(protos, z); });
  });
  auto row = finish_row(std::move(acc), start);
  row.head = head_name(head);
  row.distance = distance.name();
  row.eval_way = spec.n_way;
  row.eval_shot = spec.n_support;
  row.seed = seed;
  return row;
}

EvalRow evaluate_zero_shot(const EmbeddingNet& query_embed, const EmbeddingNet& meta_embed,
                           const AttributeDataset& data, const EpisodeSpec& spec, std::size_t n_episodes,
                           const DistanceFn& distance, std::uint64_t seed, std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> acc;
  parallel_episodes(n_episodes, threads, acc, [&](std::size_t i) {
    NoGradGuard guard;
    const auto ep = zero_shot_eval_episode(data.features, spec, seed, i);
    const PrototypeSet protos{normalize_rows(meta_embed.embed(data.attribute_matrix(ep.class_indices))),
                              ep.class_ids, distance};
    const auto queries = query_embed.embed(ep.query);
    return episode_accuracy(queries, ep.query_labels,
                            [&](std::span<const double> z) { return classify_query(protos, z); });
  });
  auto row = finish_row(std::move(acc), start);
  row.head = "protonet";
  row.distance = distance.name();
  row.eval_way = spec.n_way;
  row.eval_shot = 0;
  row.seed = seed;
  return row;
}

EvalRow evaluate_model(const ExperimentConfig& config, const Model& model, const PreparedData& data) {
  const auto distance = DistanceFn::parse(config.distance);
  EvalRow row;
  if (data.zero_shot) {
    if (!model.meta_embed) throw ContractError("evaluate: zero-shot data needs a meta-data embedding");
    row = evaluate_zero_shot(model.embed, *model.meta_embed, data.zs_test, config.eval_spec, config.eval_episodes,
                             distance, config.seed, config.eval_threads);
  } else {
    row = evaluate(model.embed, data.test, config.eval_spec, config.eval_episodes, distance, parse_head(config.head),
                   config.seed, config.eval_threads);
  }
  row.train_way = config.train_spec.n_way;
  row.train_shot = data.zero_shot ? 0 : config.train_spec.n_support;
  return row;
}

std::vector<EvalRow> run_grid(const ExperimentConfig& base, const GridAxes& axes, std::ostream* progress) {
  const auto distances = axes.distance.empty() ? std::vector<std::string>{base.distance} : axes.distance;
  const auto ways = axes.train_way.empty() ? std::vector<std::size_t>{base.train_spec.n_way} : axes.train_way;
  const auto shots = axes.train_shot.empty() ? std::vector<std::size_t>{base.train_spec.n_support} : axes.train_shot;
  const auto heads = axes.head.empty() ? std::vector<std::string>{base.head} : axes.head;

  const auto data = prepare_data(base);
  std::vector<EvalRow> rows;
  for (const auto& head : heads)
    for (const auto& dist : distances)
      for (auto way : ways)
        for (auto shot : shots) {
          auto cfg = base;
          cfg.head = head;
          cfg.distance = dist;
          cfg.train_spec.n_way = way;
          cfg.train_spec.n_support = shot;
          EvalRow row;
          try {
            const auto trained = train(cfg, data);
            row = evaluate_model(cfg, trained.model, data);
          } catch (const std::exception& e) {
            row = EvalRow{};
            row.head = head;
            row.distance = dist;
            row.train_way = way;
            row.train_shot = shot;
            row.eval_way = cfg.eval_spec.n_way;
            row.eval_shot = cfg.eval_spec.n_support;
            row.seed = cfg.seed;
            row.error = e.what();
          }
          if (progress) {
            *progress << head << ' ' << dist << " way=" << way << " shot=" << shot << ": "
                      << (row.error.empty() ? "acc=" + std::to_string(row.acc_mean) : "FAILED " + row.error)
                      << '\n';
          }
          rows.push_back(std::move(row));
        }
  return rows;
}

void write_report_csv(std::ostream& os, std::span<const EvalRow> rows) {
  os << kReportHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    if (r.error.empty()) {
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%zu,%zu,%zu,%.6f,%.6f,%llu\n", r.head.c_str(),
                    r.distance.c_str(), r.train_way, r.train_shot, r.eval_way, r.eval_shot, r.episodes, r.acc_mean,
                    r.ci95, static_cast<unsigned long long>(r.seed));
    } else {
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%zu,%zu,0,NA,NA,%llu\n", r.head.c_str(), r.distance.c_str(),
                    r.train_way, r.train_shot, r.eval_way, r.eval_shot, static_cast<unsigned long long>(r.seed));
    }
    os << buf;
  }
}

}  // namespace protonet

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protonet/checkpoint.hpp"
#include "protonet/config.hpp"
#include "protonet/data.hpp"
#include "protonet/distances.hpp"
#include "protonet/embedding.hpp"
#include "protonet/episodes.hpp"

namespace protonet {

/// initial_lr * 0.5^floor(episode_index / halving_period); a period of 0
/// keeps the rate fixed.
double lr_schedule(double initial_lr, std::size_t episode_index, std::size_t halving_period);

enum class Head { protonet, matching };
Head parse_head(const std::string& name);
const char* head_name(Head head);

/// Query embedding f and, for zero-shot runs, the meta-data embedding g.
struct Model {
  EmbeddingNet embed;
  std::optional<EmbeddingNet> meta_embed;

  std::vector<Tensor> parameters() const;
  // Tensors named "f.<...>" and "g.<...>".
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);
};

struct PreparedData {
  bool zero_shot = false;
  LabeledDataset train, val, test;
  AttributeDataset zs_train, zs_val, zs_test;
  // Generating means of the test classes, for synthetic Gaussian data only.
  std::vector<std::vector<double>> test_true_means;
  double noise_sigma = 0.0;

  const Shape& input_shape() const { return zero_shot ? zs_train.features.input_shape : train.input_shape; }
  bool has_validation() const {
    return zero_shot ? zs_val.features.num_classes() > 0 : val.num_classes() > 0;
  }
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Fresh network(s) for `config`, initialized from the config seed.
Model init_model(const ExperimentConfig& config, const PreparedData& data);

struct TrainLogRow {
  std::size_t episode;
  double loss;
  double lr;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRow> log;
  bool stopped_early = false;
  std::optional<double> best_val_loss;
};

/// Episodic training: sample -> loss -> backward -> Adam with the scheduled
/// rate and optional decoupled weight decay. With early stopping configured
/// and validation classes available, validation loss is measured every
/// `eval_every` episodes and the best parameters are restored when patience
/// runs out. Throws NumericError if the loss diverges.
TrainResult train(const ExperimentConfig& config, const PreparedData& data);

void write_training_log(std::ostream& os, std::span<const TrainLogRow> rows);

struct EvalRow {
  std::string head;
  std::string distance;
  std::size_t train_way = 0;
  std::size_t train_shot = 0;
  std::size_t eval_way = 0;
  std::size_t eval_shot = 0;
  std::size_t episodes = 0;
  double acc_mean = 0.0;
  double ci95 = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;  // not part of the CSV
  std::vector<double> per_episode;
  std::string error;  // non-empty when the cell failed
};

/// The i-th evaluation episode for `seed`. Every episode has its own derived
/// stream, so episodes can be produced in any order or in parallel.
Episode eval_episode(const LabeledDataset& data, const EpisodeSpec& spec, std::uint64_t seed, std::size_t index);
Episode zero_shot_eval_episode(const LabeledDataset& features, const EpisodeSpec& spec, std::uint64_t seed,
                               std::size_t index);

/// Mean per-episode accuracy and 95% confidence half-width over `n_episodes`
/// evaluation episodes. Read-only w.r.t. the network; `threads` > 1 splits
/// the episodes across threads with identical results.
EvalRow evaluate(const EmbeddingNet& embed, const LabeledDataset& data, const EpisodeSpec& spec,
                 std::size_t n_episodes, const DistanceFn& distance, Head head, std::uint64_t seed,
                 std::size_t threads = 1);

EvalRow evaluate_zero_shot(const EmbeddingNet& query_embed, const EmbeddingNet& meta_embed,
                           const AttributeDataset& data, const EpisodeSpec& spec, std::size_t n_episodes,
                           const DistanceFn& distance, std::uint64_t seed, std::size_t threads = 1);

/// Evaluates `model` on the test split as configured, with the config echo
/// filled in.
EvalRow evaluate_model(const ExperimentConfig& config, const Model& model, const PreparedData& data);

/// One train + evaluate per cell of the cartesian product of the axes (an
/// empty axis keeps the base value). Failed cells are reported with `error`
/// set and the grid continues.
std::vector<EvalRow> run_grid(const ExperimentConfig& base, const GridAxes& axes, std::ostream* progress = nullptr);

inline constexpr const char* kReportHeader =
    "head,distance,train_way,train_shot,eval_way,eval_shot,episodes,acc_mean,ci95,seed";

void write_report_csv(std::ostream& os, std::span<const EvalRow> rows);

}  // namespace protonet

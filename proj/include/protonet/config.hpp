#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protonet/data.hpp"
#include "protonet/episodes.hpp"

namespace protonet {

enum class DatasetType { synthetic, manifest, synthetic_attributes, attributes };

/// Where the classes come from and how they split into train / validation /
/// test. Generated and single-manifest sources split by class order: the
/// first `train_classes`, the next `val_classes`, the rest for test.
struct DatasetSource {
  DatasetType type = DatasetType::synthetic;
  SyntheticSpec synthetic;
  AttributeSpec attributes;
  std::filesystem::path path;  // single manifest, split by counts
  std::filesystem::path train_path, val_path, test_path;
  std::size_t train_classes = 0;
  std::size_t val_classes = 0;
  std::vector<int> rotations;  // applied to every split (image manifests only)
  bool standardize_attributes = false;

  bool zero_shot() const {
    return type == DatasetType::synthetic_attributes || type == DatasetType::attributes;
  }
};

struct EarlyStopping {
  std::size_t patience = 3;       // validation rounds without improvement
  std::size_t eval_every = 100;   // training episodes between rounds
  std::size_t val_episodes = 50;
};

struct GridAxes {
  std::vector<std::string> distance;
  std::vector<std::size_t> train_way;
  std::vector<std::size_t> train_shot;
  std::vector<std::string> head;
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::string embedding = "mlp:16-64-64";
  std::string meta_embedding;  // zero-shot prototype network g
  std::string distance = "sq_euclidean";
  std::string head = "protonet";  // or "matching"
  EpisodeSpec train_spec{60, 5, 5};
  EpisodeSpec eval_spec{5, 5, 15};
  double initial_lr = 1e-3;
  std::size_t lr_halving_period = 2000;  // 0 keeps the rate fixed
  std::size_t max_episodes = 1000;
  std::size_t eval_episodes = 600;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  std::optional<EarlyStopping> early_stopping;
  std::size_t eval_threads = 1;
  GridAxes grid;

  void validate() const;
};

/// Parses a config document. Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace protonet

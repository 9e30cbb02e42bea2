#include "protonet/config.hpp"

#include <fstream>

#include "protonet/distances.hpp"
#include "protonet/error.hpp"

namespace protonet {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ExperimentConfig::validate() const {
  const bool zs = dataset.zero_shot();
  auto check_spec = [zs](const EpisodeSpec& s, const char* which) {
    if (s.n_way == 0 || s.n_query == 0 || (!zs && s.n_support == 0)) {
      throw ContractError(std::string("config: ") + which + " way, shot and query must be positive");
    }
  };
  check_spec(train_spec, "train");
  check_spec(eval_spec, "eval");
  if (!(initial_lr > 0.0)) throw ContractError("config: initial_lr must be positive");
  if (eval_episodes == 0) throw ContractError("config: eval_episodes must be positive");
  if (weight_decay < 0.0) throw ContractError("config: weight_decay must be non-negative");
  if (head != "protonet" && head != "matching") throw ContractError("config: head must be protonet or matching");
  if (zs && head != "protonet") throw ContractError("config: zero-shot data requires the protonet head");
  if (zs && meta_embedding.empty()) throw ContractError("config: zero-shot data requires meta_embedding");
  if (early_stopping && (early_stopping->patience == 0 || early_stopping->eval_every == 0 ||
                         early_stopping->val_episodes == 0)) {
    throw ContractError("config: early_stopping counts must be positive");
  }
  DistanceFn::parse(distance);
}

namespace {

EpisodeSpec parse_spec(const json& j, EpisodeSpec fallback) {
  fallback.n_way = j.value("way", fallback.n_way);
  fallback.n_support = j.value("shot", fallback.n_support);
  fallback.n_query = j.value("query", fallback.n_query);
  return fallback;
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  fs::path p = j[key].get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

DatasetSource parse_dataset(const json& j, const fs::path& base) {
  DatasetSource d;
  const auto type = j.value("type", std::string("synthetic"));
  if (type == "synthetic") {
    d.type = DatasetType::synthetic;
    auto& s = d.synthetic;
    s.n_classes = j.value("n_classes", s.n_classes);
    s.dim = j.value("dim", s.dim);
    s.examples_per_class = j.value("examples_per_class", s.examples_per_class);
    s.mean_scale = j.value("mean_scale", s.mean_scale);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
  } else if (type == "synthetic_attributes") {
    d.type = DatasetType::synthetic_attributes;
    auto& s = d.attributes;
    s.n_classes = j.value("n_classes", s.n_classes);
    s.attribute_dim = j.value("attribute_dim", s.attribute_dim);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.examples_per_class = j.value("examples_per_class", s.examples_per_class);
    s.mean_noise = j.value("mean_noise", s.mean_noise);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
  } else if (type == "manifest" || type == "attributes") {
    d.type = type == "manifest" ? DatasetType::manifest : DatasetType::attributes;
    d.path = resolve(j, "path", base);
    d.train_path = resolve(j, "train", base);
    d.val_path = resolve(j, "val", base);
    d.test_path = resolve(j, "test", base);
    if (d.path.empty() && (d.train_path.empty() || d.test_path.empty())) {
      throw ContractError("config: manifest datasets need \"path\" or both \"train\" and \"test\"");
    }
  } else {
    throw ContractError("config: unknown dataset type \"" + type + "\"");
  }
  d.train_classes = j.value("train_classes", d.train_classes);
  d.val_classes = j.value("val_classes", d.val_classes);
  d.rotations = j.value("rotations", d.rotations);
  d.standardize_attributes = j.value("standardize_attributes", false);
  return d;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    if (doc.contains("dataset")) c.dataset = parse_dataset(doc["dataset"], base_dir);
    c.embedding = doc.value("embedding", c.embedding);
    c.meta_embedding = doc.value("meta_embedding", c.meta_embedding);
    c.distance = doc.value("distance", c.distance);
    c.head = doc.value("head", c.head);
    if (doc.contains("train")) c.train_spec = parse_spec(doc["train"], c.train_spec);
    if (doc.contains("eval")) c.eval_spec = parse_spec(doc["eval"], c.eval_spec);
    c.initial_lr = doc.value("initial_lr", c.initial_lr);
    c.lr_halving_period = doc.value("lr_halving_period", c.lr_halving_period);
    c.max_episodes = doc.value("max_episodes", c.max_episodes);
    c.eval_episodes = doc.value("eval_episodes", c.eval_episodes);
    c.seed = doc.value("seed", c.seed);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.eval_threads = doc.value("eval_threads", c.eval_threads);
    if (doc.contains("early_stopping") && !doc["early_stopping"].is_null()) {
      const auto& e = doc["early_stopping"];
      EarlyStopping es;
      es.patience = e.value("patience", es.patience);
      es.eval_every = e.value("eval_every", es.eval_every);
      es.val_episodes = e.value("val_episodes", es.val_episodes);
      c.early_stopping = es;
    }
    if (doc.contains("grid")) {
      const auto& g = doc["grid"];
      c.grid.distance = g.value("distance", c.grid.distance);
      c.grid.train_way = g.value("train_way", c.grid.train_way);
      c.grid.train_shot = g.value("train_shot", c.grid.train_shot);
      c.grid.head = g.value("head", c.grid.head);
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open config file " + path.string());
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw LoadError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json ds;
  const auto& d = c.dataset;
  switch (d.type) {
    case DatasetType::synthetic:
      ds = {{"type", "synthetic"},
            {"n_classes", d.synthetic.n_classes},
            {"dim", d.synthetic.dim},
            {"examples_per_class", d.synthetic.examples_per_class},
            {"mean_scale", d.synthetic.mean_scale},
            {"noise_sigma", d.synthetic.noise_sigma},
            {"seed", d.synthetic.seed}};
      break;
    case DatasetType::synthetic_attributes:
      ds = {{"type", "synthetic_attributes"},
            {"n_classes", d.attributes.n_classes},
            {"attribute_dim", d.attributes.attribute_dim},
            {"feature_dim", d.attributes.feature_dim},
            {"examples_per_class", d.attributes.examples_per_class},
            {"mean_noise", d.attributes.mean_noise},
            {"noise_sigma", d.attributes.noise_sigma},
            {"seed", d.attributes.seed}};
      break;
    case DatasetType::manifest:
    case DatasetType::attributes:
      ds = {{"type", d.type == DatasetType::manifest ? "manifest" : "attributes"}};
      if (!d.path.empty()) ds["path"] = d.path.string();
      if (!d.train_path.empty()) ds["train"] = d.train_path.string();
      if (!d.val_path.empty()) ds["val"] = d.val_path.string();
      if (!d.test_path.empty()) ds["test"] = d.test_path.string();
      break;
  }
  ds["train_classes"] = d.train_classes;
  ds["val_classes"] = d.val_classes;
  if (!d.rotations.empty()) ds["rotations"] = d.rotations;
  if (d.standardize_attributes) ds["standardize_attributes"] = true;

  json doc{{"dataset", ds},
           {"embedding", c.embedding},
           {"distance", c.distance},
           {"head", c.head},
           {"train", {{"way", c.train_spec.n_way}, {"shot", c.train_spec.n_support}, {"query", c.train_spec.n_query}}},
           {"eval", {{"way", c.eval_spec.n_way}, {"shot", c.eval_spec.n_support}, {"query", c.eval_spec.n_query}}},
           {"initial_lr", c.initial_lr},
           {"lr_halving_period", c.lr_halving_period},
           {"max_episodes", c.max_episodes},
           {"eval_episodes", c.eval_episodes},
           {"seed", c.seed},
           {"weight_decay", c.weight_decay},
           {"eval_threads", c.eval_threads}};
  if (!c.meta_embedding.empty()) doc["meta_embedding"] = c.meta_embedding;
  if (c.early_stopping) {
    doc["early_stopping"] = {{"patience", c.early_stopping->patience},
                             {"eval_every", c.early_stopping->eval_every},
                             {"val_episodes", c.early_stopping->val_episodes}};
  }
  return doc;
}

}  // namespace protonet

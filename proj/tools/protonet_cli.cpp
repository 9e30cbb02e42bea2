// protonet_cli: dataset generation, training, evaluation, grid sweeps and
// self-checks for prototypical networks.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "protonet/checkpoint.hpp"
#include "protonet/config.hpp"
#include "protonet/data.hpp"
#include "protonet/error.hpp"
#include "protonet/harness.hpp"
#include "protonet/selftest.hpp"

namespace fs = std::filesystem;
using namespace protonet;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes, way, shot, query;
  std::optional<std::string> distance, head;
  std::string out;
  std::string checkpoint;
  std::string log;
  std::optional<std::size_t> classes, dim, examples;
  std::optional<double> sigma;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--out", o.out, "Output path");
  cmd->add_option("--episodes", o.episodes, "Training episodes (train, grid) or evaluation episodes (eval)");
  cmd->add_option("--way", o.way, "Classes per episode");
  cmd->add_option("--shot", o.shot, "Support examples per class");
  cmd->add_option("--query", o.query, "Query examples per class");
  cmd->add_option("--distance", o.distance, "sq_euclidean, cosine, mahalanobis_diag[:w,...] or bregman:<name>");
  cmd->add_option("--head", o.head, "protonet or matching");
}

ExperimentConfig base_config(const Overrides& o) {
  auto c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.distance) c.distance = *o.distance;
  if (o.head) c.head = *o.head;
  return c;
}

void apply_spec(EpisodeSpec& spec, const Overrides& o) {
  if (o.way) spec.n_way = *o.way;
  if (o.shot) spec.n_support = *o.shot;
  if (o.query) spec.n_query = *o.query;
}

void require_config(const Overrides& o, const char* cmd) {
  if (o.config.empty()) throw ContractError(std::string(cmd) + ": --config is required");
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write " + path.string());
  return os;
}

int cmd_gen_data(const Overrides& o) {
  if (o.out.empty()) throw ContractError("gen-data: --out DIR is required");
  auto c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  fs::path manifest;
  if (c.dataset.type == DatasetType::synthetic_attributes) {
    auto spec = c.dataset.attributes;
    if (o.seed) spec.seed = *o.seed;
    if (o.classes) spec.n_classes = *o.classes;
    if (o.dim) spec.feature_dim = *o.dim;
    if (o.examples) spec.examples_per_class = *o.examples;
    if (o.sigma) spec.noise_sigma = *o.sigma;
    manifest = write_attribute_dataset(gen_attribute_dataset(spec), o.out);
  } else {
    auto spec = c.dataset.synthetic;
    if (o.seed) spec.seed = *o.seed;
    if (o.classes) spec.n_classes = *o.classes;
    if (o.dim) spec.dim = *o.dim;
    if (o.examples) spec.examples_per_class = *o.examples;
    if (o.sigma) spec.noise_sigma = *o.sigma;
    manifest = write_dataset(gen_gaussian_dataset(spec).data, o.out);
  }
  std::cout << manifest.string() << '\n';
  return 0;
}

int cmd_train(const Overrides& o) {
  require_config(o, "train");
  auto c = base_config(o);
  if (o.episodes) c.max_episodes = *o.episodes;
  apply_spec(c.train_spec, o);
  const fs::path out = o.out.empty() ? fs::path("model.pnck") : fs::path(o.out);
  const fs::path log = o.log.empty() ? fs::path(out.string() + ".log.csv") : fs::path(o.log);

  const auto data = prepare_data(c);
  const auto result = train(c, data);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(out, result.model.state());
  auto log_os = open_out(log);
  write_training_log(log_os, result.log);
  std::cerr << "trained " << result.log.size() << " episodes";
  if (result.stopped_early) std::cerr << " (stopped early)";
  if (!result.log.empty()) std::cerr << ", final loss " << result.log.back().loss;
  std::cerr << "\ncheckpoint " << out.string() << "\nlog " << log.string() << '\n';
  return 0;
}

int cmd_eval(const Overrides& o) {
  require_config(o, "eval");
  if (o.checkpoint.empty()) throw ContractError("eval: --checkpoint is required");
  auto c = base_config(o);
  if (o.episodes) c.eval_episodes = *o.episodes;
  apply_spec(c.eval_spec, o);
  c.validate();
  const auto data = prepare_data(c);
  auto model = init_model(c, data);
  model.load_state(load_checkpoint(o.checkpoint));
  const auto row = evaluate_model(c, model, data);
  const EvalRow rows[] = {row};
  if (o.out.empty()) {
    write_report_csv(std::cout, rows);
  } else {
    auto os = open_out(o.out);
    write_report_csv(os, rows);
  }
  std::cerr << "accuracy " << row.acc_mean << " +- " << row.ci95 << " over " << row.episodes << " episodes ("
            << row.wall_seconds << " s)\n";
  return 0;
}

int cmd_grid(const Overrides& o) {
  require_config(o, "grid");
  auto c = base_config(o);
  if (o.episodes) c.max_episodes = *o.episodes;
  apply_spec(c.eval_spec, o);
  auto axes = c.grid;
  if (o.distance) axes.distance = {*o.distance};
  if (o.head) axes.head = {*o.head};
  const auto rows = run_grid(c, axes, &std::cerr);
  if (o.out.empty()) {
    write_report_csv(std::cout, rows);
  } else {
    auto os = open_out(o.out);
    write_report_csv(os, rows);
  }
  for (const auto& r : rows)
    if (!r.error.empty()) return 1;
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : run_selftest()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototypical networks for few-shot and zero-shot classification"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (manifest + PFT1 files)");
  add_common(gen, o);
  gen->add_option("--classes", o.classes, "Number of classes");
  gen->add_option("--dim", o.dim, "Feature dimension");
  gen->add_option("--examples", o.examples, "Examples per class");
  gen->add_option("--sigma", o.sigma, "Within-class noise");

  auto* tr = app.add_subcommand("train", "Train an embedding and write a checkpoint and log");
  add_common(tr, o);
  tr->add_option("--log", o.log, "Training log CSV (default <out>.log.csv)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(ev, o);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train");

  auto* gr = app.add_subcommand("grid", "Train and evaluate every cell of the configured grid");
  add_common(gr, o);

  auto* st = app.add_subcommand("selftest", "Run the equivalence and gradient checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*gr) return cmd_grid(o);
    if (*st) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

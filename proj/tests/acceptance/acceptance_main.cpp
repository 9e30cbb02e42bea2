// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero if any criterion fails.
//
// Criterion 9 needs real image data and runs only when
// PROTONET_OMNIGLOT_MANIFEST points at a 28x28 Omniglot manifest
// (PROTONET_OMNIGLOT_TRAIN_CLASSES optionally sets the training class count).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "protonet/data.hpp"
#include "protonet/distances.hpp"
#include "protonet/error.hpp"
#include "protonet/harness.hpp"
#include "protonet/models.hpp"
#include "protonet/selftest.hpp"

using namespace protonet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum { pass, fail, skip } status;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome from_check(const CheckResult& r) { return {r.passed ? Outcome::pass : Outcome::fail, r.detail}; }

Outcome all_of(const std::vector<CheckResult>& checks) {
  Outcome o{Outcome::pass, ""};
  for (const auto& c : checks) {
    if (!c.passed) o.status = Outcome::fail;
    o.detail += (o.detail.empty() ? "" : "; ") + c.name + ": " + c.detail;
  }
  return o;
}

// 1 -----------------------------------------------------------------------------------------

Outcome gradient_correctness() {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  return all_of({check_episode_gradients("mlp:8-32-16", {8}, seeds, 1e-4, 0, 1e-5),
                 check_episode_gradients("omniglot-conv", {1, 14, 14}, seeds, 1e-4, 3, 1e-5)});
}

// 2-5 ----------------------------------------------------------------------------------------

Outcome one_shot() { return from_check(check_one_shot_equivalence(1000, 1e-12, 21)); }
Outcome linear_equivalence() { return from_check(check_linear_equivalence(1000, 1e-10, 22)); }
Outcome mixture() { return from_check(check_mixture_equivalence(1000, 1e-10, 23)); }

Outcome mean_minimizer() {
  auto o = from_check(check_mean_minimizer(100, 500, 24));
  // Two points, mean (0.5, 5): rotating the candidate towards (0, 10) lowers
  // the total cosine distance, so the mean is not the minimizer.
  const Tensor points({2, 2}, {1.0, 0.0, 0.0, 10.0});
  const std::vector<double> mean{0.5, 5.0};
  Rng rng(25);
  const auto probe = probe_perturbations(DistanceFn::cosine(), points, mean, 500, 2.0, rng);
  bool refused = false;
  try {
    mean_minimizer_check(DistanceFn::cosine(), points, mean, 500, 2.0, rng);
  } catch (const UnsupportedError&) {
    refused = true;
  }
  if (probe.candidate_is_minimal || !refused) o.status = Outcome::fail;
  o.detail += fmt("; cosine fixture: mean total %.6f, best perturbed %.6f, %s, check %s", probe.candidate_total,
                  probe.best_perturbed_total, probe.candidate_is_minimal ? "mean looks minimal" : "mean beaten",
                  refused ? "refuses cosine" : "accepted cosine");
  return o;
}

// 6-8 ----------------------------------------------------------------------------------------

ExperimentConfig synthetic_config(double sigma, std::uint64_t seed) {
  ExperimentConfig c;
  c.dataset.type = DatasetType::synthetic;
  c.dataset.synthetic.n_classes = 20;
  c.dataset.synthetic.dim = 16;
  c.dataset.synthetic.examples_per_class = 40;
  c.dataset.synthetic.mean_scale = 1.0;
  c.dataset.synthetic.noise_sigma = sigma;
  c.dataset.synthetic.seed = seed;
  c.dataset.train_classes = 12;
  c.dataset.val_classes = 0;
  c.embedding = "mlp:16-64-64";
  c.distance = "sq_euclidean";
  c.train_spec = {5, 5, 15};
  c.eval_spec = {5, 5, 15};
  c.max_episodes = 2000;
  c.eval_episodes = 600;
  c.seed = seed;
  c.eval_threads = 4;
  return c;
}

// 150 training classes, so a 20-way episode sees a small share of the pool.
ExperimentConfig hard_config(std::uint64_t seed) {
  auto c = synthetic_config(0.6, seed);
  c.dataset.synthetic.n_classes = 200;
  c.dataset.train_classes = 150;
  return c;
}

EvalRow train_and_evaluate(const ExperimentConfig& c) {
  const auto data = prepare_data(c);
  return evaluate_model(c, train(c, data).model, data);
}

Outcome synthetic_learning() {
  const auto c = synthetic_config(0.35, 1);
  const auto data = prepare_data(c);
  const auto row = evaluate_model(c, train(c, data).model, data);
  std::vector<Episode> episodes;
  for (std::size_t i = 0; i < c.eval_episodes; ++i) episodes.push_back(eval_episode(data.test, c.eval_spec, c.seed, i));
  const auto bayes = bayes_accuracy_oracle(data.test_true_means, data.noise_sigma, episodes);
  const double gap = bayes.mean - row.acc_mean;
  return {gap < 0.05 ? Outcome::pass : Outcome::fail,
          fmt("protonet %.4f +- %.4f, Bayes oracle %.4f, gap %.2f pp (limit 5)", row.acc_mean, row.ci95, bayes.mean,
              100 * gap)};
}

Outcome euclidean_beats_cosine() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = hard_config(seed);
    const auto euc = train_and_evaluate(c);
    c.distance = "cosine";
    const auto cos = train_and_evaluate(c);
    const bool win = euc.acc_mean - cos.acc_mean > euc.ci95 + cos.ci95;
    wins += win;
    detail += fmt("%sseed %d: euclidean %.4f +- %.4f, cosine %.4f +- %.4f%s", detail.empty() ? "" : "; ",
                  static_cast<int>(seed), euc.acc_mean, euc.ci95, cos.acc_mean, cos.ci95, win ? "" : " (no win)");
  }
  return {wins >= 2 ? Outcome::pass : Outcome::fail, fmt("%d/3 seeds; ", wins) + detail};
}

Outcome higher_training_way() {
  auto c = hard_config(1);
  const auto five = train_and_evaluate(c);
  c.train_spec.n_way = 20;
  const auto twenty = train_and_evaluate(c);
  return {twenty.acc_mean >= five.acc_mean - five.ci95 ? Outcome::pass : Outcome::fail,
          fmt("train 20-way %.4f +- %.4f, train 5-way %.4f +- %.4f (5-way eval)", twenty.acc_mean, twenty.ci95,
              five.acc_mean, five.ci95)};
}

// 9 -----------------------------------------------------------------------------------------

Outcome omniglot() {
  const char* manifest = std::getenv("PROTONET_OMNIGLOT_MANIFEST");
  if (!manifest || !*manifest) return {Outcome::skip, "set PROTONET_OMNIGLOT_MANIFEST to run"};
  ExperimentConfig c;
  c.dataset.type = DatasetType::manifest;
  c.dataset.path = manifest;
  c.dataset.rotations = {90, 180, 270};
  const auto all = load_dataset(manifest);
  if (all.input_shape != Shape{28, 28} && all.input_shape != Shape{1, 28, 28})
    return {Outcome::fail, "expected 28x28 images, got " + shape_str(all.input_shape)};
  const char* tc = std::getenv("PROTONET_OMNIGLOT_TRAIN_CLASSES");
  c.dataset.train_classes = tc ? std::strtoull(tc, nullptr, 10) : all.num_classes() * 2 / 3;
  if (c.dataset.train_classes < 200) return {Outcome::fail, "needs at least 200 training classes"};
  c.embedding = "omniglot-conv";
  c.train_spec = {20, 1, 5};
  c.eval_spec = {5, 1, 5};
  c.max_episodes = 5000;
  c.eval_episodes = 1000;
  c.seed = 1;
  c.eval_threads = 4;
  const auto row = train_and_evaluate(c);
  return {row.acc_mean >= 0.90 ? Outcome::pass : Outcome::fail,
          fmt("5-way 1-shot %.4f +- %.4f (threshold 0.90)", row.acc_mean, row.ci95)};
}

// 10 ----------------------------------------------------------------------------------------

Outcome zero_shot_path() {
  ExperimentConfig c;
  c.dataset.type = DatasetType::synthetic_attributes;
  c.dataset.attributes.n_classes = 100;
  c.dataset.attributes.attribute_dim = 16;
  c.dataset.attributes.feature_dim = 32;
  c.dataset.attributes.examples_per_class = 20;
  c.dataset.attributes.seed = 1;
  c.dataset.train_classes = 60;
  c.dataset.val_classes = 0;
  c.embedding = "cub-linear:32-16";
  c.meta_embedding = "cub-linear:16-16";
  c.train_spec = {50, 1, 10};
  c.eval_spec = {10, 1, 10};
  c.max_episodes = 1000;
  c.eval_episodes = 600;
  c.seed = 1;
  c.eval_threads = 4;
  const auto data = prepare_data(c);
  auto model = train(c, data).model;
  const auto row = evaluate_model(c, model, data);

  std::vector<std::size_t> all(data.zs_test.attributes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto protos = zero_shot_prototypes(*model.meta_embed, data.zs_test.attribute_matrix(all));
  double worst = 0.0;
  for (std::size_t k = 0; k < protos.size(); ++k) {
    const auto r = protos.prototypes.row(k);
    double n2 = 0.0;
    for (double v : r) n2 += v * v;
    worst = std::max(worst, std::abs(std::sqrt(n2) - 1.0));
  }
  const double chance = 1.0 / static_cast<double>(c.eval_spec.n_way);
  const bool ok = row.acc_mean > 3 * chance && worst < 1e-6;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("10-way 0-shot %.4f +- %.4f (need > %.2f), max | |c_k| - 1 | = %.2e", row.acc_mean, row.ci95,
              3 * chance, worst)};
}

// 11 ----------------------------------------------------------------------------------------

int run(const std::string& args) {
  const auto cmd = std::string("\"") + PROTONET_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / fmt("protonet_acceptance_%d", static_cast<int>(::getpid()));
  fs::create_directories(dir);
  std::ofstream(dir / "exp.json") << R"({
  "dataset": {"type": "synthetic", "n_classes": 20, "dim": 16, "noise_sigma": 0.35, "seed": 7, "train_classes": 12},
  "embedding": "mlp:16-64-64",
  "train": {"way": 5, "shot": 5, "query": 15},
  "eval": {"way": 5, "shot": 5, "query": 15},
  "max_episodes": 200, "eval_episodes": 200, "seed": 7, "eval_threads": 4
})";
  std::vector<std::string> reports;
  for (int i = 0; i < 2; ++i) {
    const auto ckpt = (dir / fmt("run%d.pnck", i)).string();
    const auto report = dir / fmt("run%d.csv", i);
    if (run("train --config " + (dir / "exp.json").string() + " --out " + ckpt) != 0 ||
        run("eval --config " + (dir / "exp.json").string() + " --checkpoint " + ckpt + " --out " + report.string()) != 0) {
      fs::remove_all(dir);
      return {Outcome::fail, "CLI run failed"};
    }
    reports.push_back(slurp(report));
  }
  const bool same_ckpt = slurp(dir / "run0.pnck") == slurp(dir / "run1.pnck");
  fs::remove_all(dir);
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same ? Outcome::pass : Outcome::fail,
          fmt("reports %s (%zu bytes), checkpoints %s", same ? "identical" : "differ", reports[0].size(),
              same_ckpt ? "identical" : "differ")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "one-shot matching/prototype equivalence", one_shot},
      {3, "linear-head equivalence", linear_equivalence},
      {4, "mixture-density equivalence", mixture},
      {5, "Bregman mean minimizer", mean_minimizer},
      {6, "synthetic learning vs Bayes oracle", synthetic_learning},
      {7, "euclidean beats cosine", euclidean_beats_cosine},
      {8, "higher training way", higher_training_way},
      {9, "omniglot long run", omniglot},
      {10, "zero-shot", zero_shot_path},
      {11, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIP";
    std::printf("%s [%d] %s: %s (%.1f s)\n", tag, c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.status == Outcome::fail;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

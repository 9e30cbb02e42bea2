#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "protonet/checkpoint.hpp"
#include "protonet/error.hpp"
#include "protonet/harness.hpp"
#include "protonet/stats.hpp"
#include "test_support.hpp"

using namespace protonet;
using protonet::testing::TempDir;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.dataset.synthetic.n_classes = 16;
  c.dataset.synthetic.dim = 6;
  c.dataset.synthetic.examples_per_class = 20;
  c.dataset.synthetic.noise_sigma = 0.35;
  c.dataset.synthetic.seed = 11;
  c.dataset.train_classes = 10;
  c.dataset.val_classes = 0;
  c.embedding = "mlp:6-16-8";
  c.train_spec = {5, 3, 4};
  c.eval_spec = {5, 3, 5};
  c.max_episodes = 50;
  c.eval_episodes = 40;
  c.seed = 3;
  return c;
}

// Single dense layer fixed to the identity map.
EmbeddingNet identity_net(std::size_t m) {
  Rng rng(0);
  auto net = EmbeddingNet::mlp({m, m}, rng);
  std::vector<double> eye(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) eye[i * m + i] = 1.0;
  net.load_state({{"layers.0.weight", Tensor({m, m}, eye)}, {"layers.0.bias", Tensor::zeros({m})}}, "");
  return net;
}

bool same_state(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].tensor.data(), y = b[i].tensor.data();
    if (a[i].name != b[i].name || x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * 8) != 0)
      return false;
  }
  return true;
}

std::string csv(std::span<const EvalRow> rows) {
  std::ostringstream os;
  write_report_csv(os, rows);
  return os.str();
}

struct RunResult {
  int code;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PROTONET_CLI_PATH + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

// Learning-rate schedule ---------------------------------------------------------------

TEST(LrSchedule, HalvesEveryPeriod) {
  EXPECT_EQ(lr_schedule(1e-3, 0, 2000), 1e-3);
  EXPECT_EQ(lr_schedule(1e-3, 1999, 2000), 1e-3);
  EXPECT_EQ(lr_schedule(1e-3, 2000, 2000), 5e-4);
  EXPECT_EQ(lr_schedule(1e-3, 4000, 2000), 2.5e-4);
  EXPECT_EQ(lr_schedule(1e-3, 1000000, 0), 1e-3);
}

// Training -----------------------------------------------------------------------------

TEST(Train, ZeroEpisodesLeavesInitialization) {
  auto c = small_config();
  c.max_episodes = 0;
  const auto data = prepare_data(c);
  const auto r = train(c, data);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(same_state(r.model.state(), init_model(c, data).state()));
}

TEST(Train, LossDecreases) {
  auto c = small_config();
  c.max_episodes = 500;
  const auto data = prepare_data(c);
  const auto r = train(c, data);
  ASSERT_EQ(r.log.size(), 500u);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    first += r.log[i].loss;
    last += r.log[450 + i].loss;
  }
  EXPECT_LT(last, 0.5 * first);
  EXPECT_EQ(r.log[0].episode, 0u);
  EXPECT_EQ(r.log[499].lr, 1e-3);
}

TEST(Train, ScheduleAppearsInLog) {
  auto c = small_config();
  c.max_episodes = 25;
  c.lr_halving_period = 10;
  const auto r = train(c, prepare_data(c));
  EXPECT_EQ(r.log[9].lr, 1e-3);
  EXPECT_EQ(r.log[10].lr, 5e-4);
  EXPECT_EQ(r.log[24].lr, 2.5e-4);
}

TEST(Train, SameSeedSameParameters) {
  auto c = small_config();
  const auto data = prepare_data(c);
  const auto a = train(c, data), b = train(c, data);
  EXPECT_TRUE(same_state(a.model.state(), b.model.state()));
  c.seed = 4;
  EXPECT_FALSE(same_state(a.model.state(), train(c, data).model.state()));
}

TEST(Train, TrainingLogFormat) {
  const std::vector<TrainLogRow> rows{{0, 1.5, 1e-3}, {1, 0.25, 5e-4}};
  std::ostringstream os;
  write_training_log(os, rows);
  EXPECT_EQ(os.str(), "episode,loss,lr\n0,1.5,0.001\n1,0.25,0.00050000000000000001\n");
}

TEST(Train, EarlyStoppingRestoresBestValidation) {
  auto c = small_config();
  c.dataset.train_classes = 6;
  c.dataset.val_classes = 5;
  c.max_episodes = 400;
  c.early_stopping = EarlyStopping{1, 20, 10};
  const auto data = prepare_data(c);
  ASSERT_TRUE(data.has_validation());
  const auto r = train(c, data);
  ASSERT_TRUE(r.best_val_loss.has_value());
  EXPECT_TRUE(std::isfinite(*r.best_val_loss));
  if (r.stopped_early) {
    EXPECT_LT(r.log.size(), 400u);
  }
}

TEST(Train, RejectsOversizedEpisodes) {
  auto c = small_config();
  c.train_spec = {11, 3, 4};
  EXPECT_THROW(train(c, prepare_data(c)), InsufficientDataError);
}

// Evaluation ---------------------------------------------------------------------------

TEST(Evaluate, SeparatedClassesScorePerfectly) {
  SyntheticSpec spec;
  spec.n_classes = 8;
  spec.dim = 4;
  spec.examples_per_class = 20;
  spec.mean_scale = 5.0;
  spec.noise_sigma = 1e-6;
  const auto g = gen_gaussian_dataset(spec);
  const auto row = evaluate(identity_net(4), g.data, {5, 2, 5}, 100, DistanceFn::squared_euclidean(), Head::protonet, 1);
  EXPECT_EQ(row.acc_mean, 1.0);
  EXPECT_EQ(row.ci95, 0.0);
  EXPECT_EQ(row.per_episode.size(), 100u);
}

TEST(Evaluate, IndistinguishableClassesAtChance) {
  SyntheticSpec spec;
  spec.n_classes = 10;
  spec.dim = 4;
  spec.examples_per_class = 30;
  spec.mean_scale = 0.0;
  const auto g = gen_gaussian_dataset(spec);
  const auto row = evaluate(identity_net(4), g.data, {5, 5, 10}, 600, DistanceFn::squared_euclidean(), Head::protonet, 2);
  EXPECT_NEAR(row.acc_mean, 0.2, 3 * row.ci95 / 1.96);
}

TEST(Evaluate, ConfidenceIntervalMatchesPerEpisode) {
  auto c = small_config();
  const auto data = prepare_data(c);
  const auto model = init_model(c, data);
  const auto row = evaluate(model.embed, data.test, c.eval_spec, 50, DistanceFn::squared_euclidean(), Head::protonet, 5);
  double m = 0;
  for (double a : row.per_episode) m += a / 50.0;
  double v = 0;
  for (double a : row.per_episode) v += (a - m) * (a - m) / 49.0;
  EXPECT_NEAR(row.acc_mean, m, 1e-12);
  EXPECT_NEAR(row.ci95, 1.96 * std::sqrt(v) / std::sqrt(50.0), 1e-12);
}

TEST(Evaluate, ThreadsDoNotChangeResults) {
  auto c = small_config();
  const auto data = prepare_data(c);
  const auto model = init_model(c, data);
  for (auto head : {Head::protonet, Head::matching}) {
    const auto a = evaluate(model.embed, data.test, c.eval_spec, 37, DistanceFn::cosine(), head, 8, 1);
    const auto b = evaluate(model.embed, data.test, c.eval_spec, 37, DistanceFn::cosine(), head, 8, 4);
    EXPECT_EQ(a.per_episode, b.per_episode);
    EXPECT_EQ(a.acc_mean, b.acc_mean);
  }
}

TEST(Evaluate, LeavesNetworkUntouched) {
  // Batch-norm running statistics must survive evaluation.
  Rng rng(1);
  auto net = EmbeddingNet::conv({1, 4, 4}, 4, 2, rng);
  const auto before = net.state();
  std::vector<NamedTensor> copy;
  for (const auto& t : before) copy.push_back({t.name, t.tensor.detach()});
  LabeledDataset d{{1, 4, 4}, {}};
  for (int k = 0; k < 6; ++k) {
    d.classes.push_back({"c" + std::to_string(k), {}});
    for (int i = 0; i < 4; ++i) {
      std::vector<double> x(16);
      for (auto& v : x) v = rng.normal() + k;
      d.classes.back().examples.push_back(x);
    }
  }
  evaluate(net, d, {3, 2, 2}, 10, DistanceFn::squared_euclidean(), Head::protonet, 0);
  EXPECT_TRUE(same_state(net.state(), copy));
}

TEST(Evaluate, EpisodeStreamsAreIndexed) {
  auto c = small_config();
  const auto data = prepare_data(c);
  const auto a = eval_episode(data.test, c.eval_spec, 9, 3);
  const auto b = eval_episode(data.test, c.eval_spec, 9, 3);
  const auto other = eval_episode(data.test, c.eval_spec, 9, 4);
  EXPECT_EQ(a.class_indices, b.class_indices);
  EXPECT_EQ(a.support_examples, b.support_examples);
  EXPECT_NE(a.support_examples, other.support_examples);
}

// Grid and report ------------------------------------------------------------------------

TEST(Grid, SingleCellMatchesTrainEvaluate) {
  auto c = small_config();
  const auto rows = run_grid(c, {});
  ASSERT_EQ(rows.size(), 1u);
  const auto data = prepare_data(c);
  const auto direct = evaluate_model(c, train(c, data).model, data);
  EXPECT_EQ(rows[0].acc_mean, direct.acc_mean);
  EXPECT_EQ(rows[0].train_way, 5u);
  EXPECT_EQ(rows[0].eval_shot, 3u);
}

TEST(Grid, ProductOfAxesIsReproducible) {
  auto c = small_config();
  c.max_episodes = 20;
  GridAxes axes;
  axes.distance = {"sq_euclidean", "cosine"};
  axes.train_way = {5, 8};
  const auto a = run_grid(c, axes), b = run_grid(c, axes);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[1].distance, "sq_euclidean");
  EXPECT_EQ(a[1].train_way, 8u);
  EXPECT_EQ(a[2].distance, "cosine");
  for (const auto& r : a) EXPECT_EQ(r.eval_way, 5u);
  EXPECT_EQ(csv(a), csv(b));
}

TEST(Grid, FailedCellIsReportedAndGridContinues) {
  auto c = small_config();
  c.max_episodes = 5;
  GridAxes axes;
  axes.train_way = {5, 50};
  const auto rows = run_grid(c, axes);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].error.empty());
  EXPECT_FALSE(rows[1].error.empty());
  const auto text = csv(rows);
  EXPECT_NE(text.find("protonet,sq_euclidean,50,3,5,3,0,NA,NA,3\n"), std::string::npos);
}

TEST(Report, HeaderAndRowFormat) {
  EvalRow r;
  r.head = "protonet";
  r.distance = "sq_euclidean";
  r.train_way = 20;
  r.train_shot = 5;
  r.eval_way = 5;
  r.eval_shot = 5;
  r.episodes = 600;
  r.acc_mean = 0.98765432;
  r.ci95 = 0.0012;
  r.seed = 7;
  const std::vector<EvalRow> rows{r};
  EXPECT_EQ(csv(rows), std::string(kReportHeader) + "\nprotonet,sq_euclidean,20,5,5,5,600,0.987654,0.001200,7\n");
}

// Config ---------------------------------------------------------------------------------

TEST(Config, ParsesAndRoundTrips) {
  const auto doc = nlohmann::json::parse(R"({
    "dataset": {"type": "synthetic", "n_classes": 30, "dim": 8, "train_classes": 20},
    "embedding": "mlp:8-32-16", "distance": "cosine",
    "train": {"way": 20, "shot": 5, "query": 5}, "eval": {"way": 5, "shot": 1, "query": 15},
    "initial_lr": 0.002, "lr_halving_period": 100, "max_episodes": 300, "seed": 12,
    "early_stopping": {"patience": 2, "eval_every": 50, "val_episodes": 20},
    "grid": {"train_way": [5, 20]}
  })");
  const auto c = parse_config(doc);
  EXPECT_EQ(c.dataset.synthetic.n_classes, 30u);
  EXPECT_EQ(c.train_spec.n_way, 20u);
  EXPECT_EQ(c.eval_spec.n_support, 1u);
  EXPECT_EQ(c.initial_lr, 0.002);
  ASSERT_TRUE(c.early_stopping.has_value());
  EXPECT_EQ(c.early_stopping->eval_every, 50u);
  EXPECT_EQ(c.grid.train_way, (std::vector<std::size_t>{5, 20}));
  const auto again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"train": {"way": 0}})")), ContractError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"head": "knn"})")), ContractError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"dataset": {"type": "imagenet"}})")), ContractError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"max_episodes": "many"})")), ContractError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), LoadError);
  TempDir dir;
  std::ofstream(dir.path() / "bad.json") << "{";
  EXPECT_THROW(load_config(dir.path() / "bad.json"), LoadError);
}

TEST(Config, ManifestPathsResolveAgainstConfigDirectory) {
  TempDir dir;
  std::ofstream(dir.path() / "c.json") << R"({"dataset": {"type": "manifest", "path": "data/manifest.json"}})";
  const auto c = load_config(dir.path() / "c.json");
  EXPECT_EQ(c.dataset.path, dir.path() / "data/manifest.json");
}

TEST(Config, ZeroShotRequiresMetaEmbedding) {
  auto c = small_config();
  c.dataset.type = DatasetType::synthetic_attributes;
  EXPECT_THROW(c.validate(), ContractError);
  c.meta_embedding = "cub-linear:16-8";
  EXPECT_NO_THROW(c.validate());
  c.head = "matching";
  EXPECT_THROW(c.validate(), ContractError);
}

// Command line ----------------------------------------------------------------------------

TEST(Cli, UnknownFlagIsUsageError) {
  const auto r = run_cli("train --no-such-flag");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("error"), std::string::npos);
  EXPECT_EQ(run_cli("").code, 2);
}

TEST(Cli, MissingConfigNamesThePath) {
  const auto r = run_cli("train --config /nonexistent/exp.json");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("/nonexistent/exp.json"), std::string::npos);
}

TEST(Cli, GenerateTrainEvaluate) {
  TempDir dir;
  const auto d = dir.path();
  auto gen = run_cli("gen-data --classes 12 --dim 5 --examples 15 --seed 2 --out " + (d / "data").string());
  ASSERT_EQ(gen.code, 0) << gen.output;
  ASSERT_TRUE(fs::exists(d / "data" / "manifest.json"));

  std::ofstream(d / "exp.json") << R"({
    "dataset": {"type": "manifest", "path": "data/manifest.json", "train_classes": 8},
    "embedding": "mlp:5-16-8", "train": {"way": 4, "shot": 2, "query": 3},
    "eval": {"way": 4, "shot": 2, "query": 5}, "max_episodes": 30, "eval_episodes": 20, "seed": 1
  })";
  auto tr = run_cli("train --config " + (d / "exp.json").string() + " --out " + (d / "m.pnck").string());
  ASSERT_EQ(tr.code, 0) << tr.output;
  const auto log = read_file(d / "m.pnck.log.csv");
  EXPECT_EQ(log.rfind("episode,loss,lr\n0,", 0), 0u);
  const auto ckpt_before = read_file(d / "m.pnck");

  const auto eval_args = "eval --config " + (d / "exp.json").string() + " --checkpoint " + (d / "m.pnck").string();
  auto ev = run_cli(eval_args + " --out " + (d / "r1.csv").string());
  ASSERT_EQ(ev.code, 0) << ev.output;
  auto ev2 = run_cli(eval_args + " --out " + (d / "r2.csv").string());
  ASSERT_EQ(ev2.code, 0) << ev2.output;
  const auto report = read_file(d / "r1.csv");
  EXPECT_EQ(report.rfind(std::string(kReportHeader) + "\nprotonet,sq_euclidean,4,2,4,2,20,", 0), 0u);
  EXPECT_EQ(report, read_file(d / "r2.csv"));
  EXPECT_EQ(read_file(d / "m.pnck"), ckpt_before);

  auto wrong = run_cli(eval_args + " --seed 5");
  EXPECT_EQ(wrong.code, 0) << wrong.output;
  auto mismatch = run_cli("eval --config " + (d / "exp.json").string() + " --checkpoint " + (d / "nope.pnck").string());
  EXPECT_EQ(mismatch.code, 1);
}

TEST(Cli, SelftestPasses) {
  const auto r = run_cli("selftest");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
}

TEST(Config, ShippedPresetsLoad) {
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(PROTONET_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    SCOPED_TRACE(e.path().string());
    const auto c = load_config(e.path());
    EXPECT_NO_THROW(c.validate());
    if (c.dataset.type == DatasetType::synthetic || c.dataset.type == DatasetType::synthetic_attributes) {
      const auto data = prepare_data(c);
      EXPECT_NO_THROW(init_model(c, data));
    }
    ++count;
  }
  EXPECT_GE(count, 5u);
}

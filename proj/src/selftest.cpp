#include "protonet/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "protonet/distances.hpp"
#include "protonet/embedding.hpp"
#include "protonet/episodes.hpp"
#include "protonet/error.hpp"
#include "protonet/gradcheck.hpp"
#include "protonet/models.hpp"

namespace protonet {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor({rows, cols}, std::move(v));
}

double max_abs_diff(const ClassPosterior& a, const ClassPosterior& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.probabilities.size(); ++k)
    worst = std::max(worst, std::abs(a.probabilities[k] - b.probabilities[k]));
  return worst;
}

LabeledDataset random_dataset(const Shape& input_shape, std::size_t classes, std::size_t per_class, Rng& rng) {
  LabeledDataset d{input_shape, {}};
  const auto n = shape_numel(input_shape);
  for (std::size_t c = 0; c < classes; ++c) {
    ClassRecord rec{"c" + std::to_string(c), {}};
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> x(n);
      for (auto& v : x) v = rng.normal();
      rec.examples.push_back(std::move(x));
    }
    d.classes.push_back(std::move(rec));
  }
  return d;
}

}  // namespace

CheckResult check_episode_gradients(const std::string& preset, const Shape& input_shape,
                                    const std::vector<std::uint64_t>& seeds, double tolerance,
                                    std::size_t coords_per_tensor, double step) {
  CheckResult r{"gradients " + preset, true, 0.0, ""};
  std::size_t checked = 0, refined = 0, skipped = 0;
  for (auto seed : seeds) {
    Rng rng(seed);
    auto data = random_dataset(input_shape, 4, 4, rng);
    auto net = EmbeddingNet::from_preset(preset, input_shape, rng);
    net.set_training(true);
    const auto ep = sample_episode(data, {3, 2, 2}, rng);
    auto params = net.parameters();
    const auto distance = DistanceFn::squared_euclidean();
    GradCheckOptions options;
    options.step = step;
    options.max_coords_per_tensor = coords_per_tensor;
    options.seed = seed;
    options.kink_refinements = 4;
    const auto res = check_gradients(params, [&] { return episode_loss(net, ep, distance); }, options);
    r.worst = std::max(r.worst, res.max_relative_error);
    checked += res.coordinates_checked;
    refined += res.coordinates_refined;
    skipped += res.coordinates_skipped;
    if (!(res.max_relative_error < tolerance)) r.passed = false;
  }
  // A handful of coordinates may sit on a kink closer than the smallest step.
  if (skipped * 20 > checked + skipped) r.passed = false;
  r.detail = "max relative error " + fmt("%.3e", r.worst) + " over " + std::to_string(seeds.size()) + " seeds, " +
             std::to_string(checked) + " coordinates (" + std::to_string(refined) + " re-measured near a kink, " +
             std::to_string(skipped) + " skipped)";
  return r;
}

CheckResult check_one_shot_equivalence(std::size_t instances, double tolerance, std::uint64_t seed) {
  CheckResult r{"one-shot matching == protonet", true, 0.0, ""};
  Rng rng(seed);
  const auto distance = DistanceFn::squared_euclidean();
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t way = 2 + rng.uniform_below(9);
    const std::size_t dim = 1 + rng.uniform_below(16);
    const auto support = random_matrix(way, dim, rng);
    std::vector<std::size_t> labels(way);
    for (std::size_t k = 0; k < way; ++k) labels[k] = k;
    const auto z = random_matrix(1, dim, rng);
    const PrototypeSet protos{support, {}, distance};
    const auto a = matching_posterior(support, labels, way, distance, z.row(0));
    const auto b = classify_query(protos, z.row(0));
    r.worst = std::max(r.worst, max_abs_diff(a, b));
  }
  r.passed = r.worst < tolerance;
  r.detail = "max abs diff " + fmt("%.3e", r.worst);
  return r;
}

CheckResult check_linear_equivalence(std::size_t instances, double tolerance, std::uint64_t seed) {
  CheckResult r{"linear head == protonet", true, 0.0, ""};
  Rng rng(seed);
  const auto distance = DistanceFn::squared_euclidean();
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t way = 2 + rng.uniform_below(19);
    const std::size_t dim = 1 + rng.uniform_below(32);
    const PrototypeSet protos{random_matrix(way, dim, rng), {}, distance};
    const auto z = random_matrix(1, dim, rng);
    const auto a = linear_head(protos).posterior(z.row(0));
    const auto b = classify_query(protos, z.row(0));
    r.worst = std::max(r.worst, max_abs_diff(a, b));
  }
  r.passed = r.worst < tolerance;
  r.detail = "max abs diff " + fmt("%.3e", r.worst);
  return r;
}

CheckResult check_mixture_equivalence(std::size_t instances, double tolerance, std::uint64_t seed) {
  CheckResult r{"mixture == protonet", true, 0.0, ""};
  Rng rng(seed);
  const auto distance = DistanceFn::squared_euclidean();
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t way = 2 + rng.uniform_below(19);
    const std::size_t dim = 1 + rng.uniform_below(32);
    const auto means = random_matrix(way, dim, rng);
    const MixtureModel mix{means, std::vector<double>(way, 1.0 / static_cast<double>(way)), distance};
    const PrototypeSet protos{means, {}, distance};
    const auto z = random_matrix(1, dim, rng);
    r.worst = std::max(r.worst, max_abs_diff(mixture_posterior(mix, z.row(0)), classify_query(protos, z.row(0))));
  }
  r.passed = r.worst < tolerance;
  r.detail = "max abs diff " + fmt("%.3e", r.worst);
  return r;
}

CheckResult check_mean_minimizer(std::size_t point_sets, std::size_t perturbations, std::uint64_t seed) {
  CheckResult r{"mean minimizes Bregman total", true, 0.0, ""};
  Rng rng(seed);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < point_sets; ++i) {
    const std::size_t n = 2 + rng.uniform_below(19);
    const std::size_t dim = 1 + rng.uniform_below(8);
    const auto points = random_matrix(n, dim, rng);
    std::vector<double> mean(dim, 0.0);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t j = 0; j < dim; ++j) mean[j] += points.at(p, j) / static_cast<double>(n);
    std::vector<double> w(dim);
    for (auto& x : w) x = rng.uniform(0.1, 3.0);
    const double radius = rng.uniform(0.01, 1.0);
    if (!mean_minimizer_check(DistanceFn::squared_euclidean(), points, mean, perturbations, radius, rng)) ++failures;
    if (!mean_minimizer_check(DistanceFn::mahalanobis_diag(w), points, mean, perturbations, radius, rng)) ++failures;
  }
  r.worst = static_cast<double>(failures);
  r.passed = failures == 0;
  r.detail = std::to_string(failures) + " failing point sets of " + std::to_string(2 * point_sets);
  return r;
}

std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> out;
  out.push_back(check_episode_gradients("mlp:8-16-8", {8}, {1, 2}, 1e-4));
  out.push_back(check_episode_gradients("omniglot-conv", {1, 14, 14}, {1}, 1e-4, 3));
  out.push_back(check_one_shot_equivalence(200, 1e-12, 11));
  out.push_back(check_linear_equivalence(200, 1e-10, 12));
  out.push_back(check_mixture_equivalence(200, 1e-10, 13));
  out.push_back(check_mean_minimizer(20, 100, 14));
  return out;
}

}  // namespace protonet

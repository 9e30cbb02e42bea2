#include "protonet/distances.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "protonet/error.hpp"
#include "protonet/ops.hpp"

namespace protonet {

BregmanGenerator squared_norm_generator() {
  return {"sq_norm",
          [](std::span<const double> z) {
            double s = 0.0;
            for (double v : z) s += v * v;
            return s;
          },
          [](std::span<const double> z, std::span<double> g) {
            for (std::size_t i = 0; i < z.size(); ++i) g[i] = 2.0 * z[i];
          }};
}

BregmanGenerator weighted_squared_norm_generator(std::vector<double> weights) {
  for (double w : weights) {
    if (!(w > 0.0)) throw ContractError("weighted_squared_norm_generator: weights must be positive");
  }
  auto w = std::make_shared<const std::vector<double>>(std::move(weights));
  return {"weighted_sq_norm",
          [w](std::span<const double> z) {
            if (z.size() != w->size()) throw DimensionError("weighted_sq_norm: dimension mismatch");
            double s = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) s += (*w)[i] * z[i] * z[i];
            return s;
          },
          [w](std::span<const double> z, std::span<double> g) {
            if (z.size() != w->size()) throw DimensionError("weighted_sq_norm: dimension mismatch");
            for (std::size_t i = 0; i < z.size(); ++i) g[i] = 2.0 * (*w)[i] * z[i];
          }};
}

BregmanGenerator negative_entropy_generator() {
  auto check = [](std::span<const double> z) {
    for (double v : z) {
      if (!(v > 0.0)) throw DomainError("neg_entropy generator requires strictly positive coordinates");
    }
  };
  return {"neg_entropy",
          [check](std::span<const double> z) {
            check(z);
            double s = 0.0;
            for (double v : z) s += v * std::log(v);
            return s;
          },
          [check](std::span<const double> z, std::span<double> g) {
            check(z);
            for (std::size_t i = 0; i < z.size(); ++i) g[i] = std::log(z[i]) + 1.0;
          }};
}

BregmanGenerator builtin_generator(std::string_view name) {
  if (name == "sq_norm") return squared_norm_generator();
  if (name == "neg_entropy") return negative_entropy_generator();
  throw ContractError("unknown Bregman generator \"" + std::string(name) + "\"");
}

DistanceFn DistanceFn::squared_euclidean() {
  DistanceFn d;
  d.kind_ = DistanceKind::squared_euclidean;
  d.name_ = "sq_euclidean";
  return d;
}

DistanceFn DistanceFn::cosine() {
  DistanceFn d;
  d.kind_ = DistanceKind::cosine;
  d.name_ = "cosine";
  return d;
}

DistanceFn DistanceFn::bregman(BregmanGenerator generator) {
  if (!generator.value || !generator.gradient) throw ContractError("bregman: generator needs value and gradient");
  DistanceFn d;
  d.kind_ = DistanceKind::bregman;
  d.name_ = "bregman:" + generator.name;
  d.generator_ = std::make_shared<const BregmanGenerator>(std::move(generator));
  return d;
}

DistanceFn DistanceFn::mahalanobis_diag(std::vector<double> weights) {
  for (double w : weights) {
    if (!(w > 0.0)) throw ContractError("mahalanobis_diag: weights must be positive");
  }
  DistanceFn d;
  d.kind_ = DistanceKind::mahalanobis_diag;
  d.name_ = "mahalanobis_diag";
  d.weights_ = std::move(weights);
  return d;
}

DistanceFn DistanceFn::parse(std::string_view name) {
  if (name == "sq_euclidean") return squared_euclidean();
  if (name == "cosine") return cosine();
  if (name == "mahalanobis_diag") return mahalanobis_diag({});
  constexpr std::string_view maha = "mahalanobis_diag:";
  if (name.starts_with(maha)) {
    std::vector<double> w;
    auto rest = name.substr(maha.size());
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto tok = rest.substr(0, comma);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ContractError("bad mahalanobis weight \"" + std::string(tok) + "\"");
      }
      w.push_back(v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return mahalanobis_diag(std::move(w));
  }
  constexpr std::string_view breg = "bregman:";
  if (name.starts_with(breg)) return bregman(builtin_generator(name.substr(breg.size())));
  throw ContractError("unknown distance \"" + std::string(name) + "\"");
}

double DistanceFn::operator()(std::span<const double> z, std::span<const double> zp) const {
  if (z.size() != zp.size()) {
    throw DimensionError("distance: dimensions differ (" + std::to_string(z.size()) + " vs " +
                         std::to_string(zp.size()) + ")");
  }
  switch (kind_) {
    case DistanceKind::squared_euclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - zp[i]) * (z[i] - zp[i]);
      return s;
    }
    case DistanceKind::mahalanobis_diag: {
      if (!weights_.empty() && weights_.size() != z.size()) {
        throw DimensionError("mahalanobis_diag: " + std::to_string(weights_.size()) + " weights for dimension " +
                             std::to_string(z.size()));
      }
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double w = weights_.empty() ? 1.0 : weights_[i];
        s += w * (z[i] - zp[i]) * (z[i] - zp[i]);
      }
      return s;
    }
    case DistanceKind::cosine: {
      double dot = 0.0, nz = 0.0, np = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        dot += z[i] * zp[i];
        nz += z[i] * z[i];
        np += zp[i] * zp[i];
      }
      if (nz == 0.0 || np == 0.0) throw DegenerateInputError("cosine distance of a zero vector");
      return std::max(0.0, 1.0 - dot / (std::sqrt(nz) * std::sqrt(np)));
    }
    case DistanceKind::bregman: {
      std::vector<double> grad(zp.size());
      generator_->gradient(zp, grad);
      double lin = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) lin += (z[i] - zp[i]) * grad[i];
      // Exact value is non-negative; rounding can push it a hair below zero.
      return std::max(0.0, generator_->value(z) - generator_->value(zp) - lin);
    }
  }
  throw ContractError("distance: unknown kind");
}

double distance(const DistanceFn& d, std::span<const double> z, std::span<const double> z_prime) {
  return d(z, z_prime);
}

Tensor pairwise_distances(const DistanceFn& d, const Tensor& queries, const Tensor& prototypes) {
  if (queries.rank() != 2 || prototypes.rank() != 2 || queries.dim(1) != prototypes.dim(1)) {
    throw DimensionError("pairwise_distances: expected [Q x M] and [K x M], got " + shape_str(queries.shape()) +
                         " and " + shape_str(prototypes.shape()));
  }
  switch (d.kind()) {
    case DistanceKind::squared_euclidean:
      return pairwise_sq_euclidean(queries, prototypes);
    case DistanceKind::cosine:
      return pairwise_cosine(queries, prototypes);
    case DistanceKind::mahalanobis_diag:
      if (d.weights().empty()) return pairwise_sq_euclidean(queries, prototypes);
      return pairwise_weighted_sq(queries, prototypes, d.weights());
    case DistanceKind::bregman:
      break;
  }
  if (GradMode::enabled() && (queries.needs_grad() || prototypes.needs_grad())) {
    throw UnsupportedError("pairwise_distances: " + d.name() + " is not differentiable on the gradient tape");
  }
  const auto q = queries.dim(0), k = prototypes.dim(0);
  std::vector<double> out(q * k);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = d(queries.row(i), prototypes.row(j));
  return Tensor({q, k}, std::move(out));
}

namespace {

double total_divergence(const DistanceFn& d, const Tensor& points, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.dim(0); ++i) s += d(points.row(i), c);
  return s;
}

}  // namespace

PerturbationProbe probe_perturbations(const DistanceFn& d, const Tensor& points, std::span<const double> candidate,
                                      std::size_t trials, double radius, Rng& rng) {
  if (points.rank() != 2 || points.dim(0) == 0) throw ContractError("probe_perturbations: need at least one point");
  if (points.dim(1) != candidate.size()) throw DimensionError("probe_perturbations: candidate dimension mismatch");
  if (!(radius > 0.0)) throw ContractError("probe_perturbations: radius must be positive");
  const auto m = candidate.size();

  PerturbationProbe probe;
  probe.candidate_total = total_divergence(d, points, candidate);
  probe.best_perturbed_total = std::numeric_limits<double>::infinity();
  // Slack for rounding in the totals; the comparison is otherwise exact.
  const double slack = 1e-12 * std::max(1.0, std::abs(probe.candidate_total));
  std::vector<double> shifted(m), dir(m);
  for (std::size_t t = 0; t < trials; ++t) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(m));
    for (std::size_t i = 0; i < m; ++i) shifted[i] = candidate[i] + r * dir[i] / norm;
    const double total = total_divergence(d, points, shifted);
    probe.best_perturbed_total = std::min(probe.best_perturbed_total, total);
    if (total + slack < probe.candidate_total) probe.candidate_is_minimal = false;
  }
  return probe;
}

bool mean_minimizer_check(const DistanceFn& d, const Tensor& points, std::span<const double> candidate,
                          std::size_t trials, double radius, Rng& rng) {
  if (!d.is_bregman()) {
    throw UnsupportedError("mean_minimizer_check: " + d.name() + " is not a Bregman divergence");
  }
  return probe_perturbations(d, points, candidate, trials, radius, rng).candidate_is_minimal;
}

}  // namespace protonet

#include "protonet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protonet/rng.hpp"

namespace protonet {

GradCheckResult check_gradients(std::span<Tensor> params, const std::function<Tensor()>& loss_fn,
                                const GradCheckOptions& options) {
  for (auto& p : params) p.zero_grad();
  loss_fn().backward();

  Rng rng(options.seed);
  GradCheckResult result;
  struct Sums {
    double diff2, a2, n2;
  };
  std::vector<Sums> sums;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    const auto analytic = p.grad();
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 && options.max_coords_per_tensor < coords.size()) {
      for (std::size_t i = 0; i < options.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.uniform_below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_tensor);
    }

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto c : coords) {
      auto values = p.mutable_data();
      const double saved = values[c];
      auto eval_at = [&](double x) {
        NoGradGuard guard;
        values[c] = x;
        const double f = loss_fn().item();
        values[c] = saved;
        return f;
      };
      const double centre = options.kink_refinements > 0 ? eval_at(saved) : 0.0;
      double step = options.step;
      double numeric = 0.0;
      bool settled = false;
      for (std::size_t attempt = 0; attempt <= options.kink_refinements; ++attempt, step /= 10.0) {
        const double plus = eval_at(saved + step);
        const double minus = eval_at(saved - step);
        numeric = (plus - minus) / (2.0 * step);
        if (options.kink_refinements == 0) {
          settled = true;
          break;
        }
        const double fwd = (plus - centre) / step;
        const double bwd = (centre - minus) / step;
        if (std::abs(fwd - bwd) <= options.kink_ratio * (std::abs(fwd) + std::abs(bwd)) + 1e-9) {
          settled = true;
          if (attempt > 0) ++result.coordinates_refined;
          break;
        }
      }
      if (!settled) {
        ++result.coordinates_skipped;
        continue;
      }
      ++result.coordinates_checked;
      diff2 += (analytic[c] - numeric) * (analytic[c] - numeric);
      a2 += analytic[c] * analytic[c];
      n2 += numeric * numeric;
    }
    sums.push_back({diff2, a2, n2});
  }

  double total_a2 = 0.0, total_n2 = 0.0;
  for (const auto& s : sums) {
    total_a2 += s.a2;
    total_n2 += s.n2;
  }
  const double floor = 1e-6 * (std::sqrt(total_a2) + std::sqrt(total_n2));
  for (std::size_t t = 0; t < sums.size(); ++t) {
    const double denom = std::max(std::sqrt(sums[t].a2) + std::sqrt(sums[t].n2), floor);
    const double err = denom < 1e-10 ? std::sqrt(sums[t].diff2) : std::sqrt(sums[t].diff2) / denom;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_tensor = t;
    }
  }
  return result;
}

}  // namespace protonet

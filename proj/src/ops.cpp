#include "protonet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "protonet/error.hpp"

namespace protonet {

using detail::make_result;
using detail::Node;

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (!t.defined() || t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

Node* grad_target(Node& self, std::size_t i) {
  auto* p = self.parents[i].get();
  return p->needs_grad ? p : nullptr;
}

// Index helper for scalar broadcast.
struct Broadcast {
  Shape shape;
  bool a_scalar = false;
  bool b_scalar = false;
};

Broadcast broadcast_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {a.shape(), false, false};
  if (b.numel() == 1) return {a.shape(), false, true};
  if (a.numel() == 1) return {b.shape(), true, false};
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not compatible");
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da, DB db) {
  const auto bc = broadcast_shapes(a, b, name);
  const auto n = shape_numel(bc.shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[bc.a_scalar ? 0 : i], bv[bc.b_scalar ? 0 : i]);
  return make_result(
      bc.shape, std::move(out), {a, b},
      [bc, n, da, db](Node& self) {
        const auto& x = self.parents[0]->data;
        const auto& y = self.parents[1]->data;
        if (auto* pa = grad_target(self, 0)) {
          auto& g = pa->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            g[bc.a_scalar ? 0 : i] += self.grad[i] * da(x[bc.a_scalar ? 0 : i], y[bc.b_scalar ? 0 : i]);
          }
        }
        if (auto* pb = grad_target(self, 1)) {
          auto& g = pb->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            g[bc.b_scalar ? 0 : i] += self.grad[i] * db(x[bc.a_scalar ? 0 : i], y[bc.b_scalar ? 0 : i]);
          }
        }
      },
      name);
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(
      a.shape(), std::move(out), {a},
      [deriv](Node& self) {
        auto* pa = grad_target(self, 0);
        if (!pa) return;
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(pa->data[i], self.data[i]);
      },
      name);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ (" + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + ")");
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result(
      {m, n}, std::move(out), {a, b},
      [m, k, n](Node& self) {
        const auto& x = self.parents[0]->data;
        const auto& y = self.parents[1]->data;
        const auto& g = self.grad;
        if (auto* pa = grad_target(self, 0)) {
          auto& ga = pa->grad_buffer();  // g . y^T
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (auto* pb = grad_target(self, 1)) {
          auto& gb = pb->grad_buffer();  // x^T . g
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double xip = x[i * k + p];
              if (xip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xip * g[i * n + j];
            }
          }
        }
      },
      "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor negate(const Tensor& a) {
  return unary(
      a, "negate", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(
      {1}, {s}, {a},
      [](Node& self) {
        if (auto* pa = grad_target(self, 0)) {
          auto& g = pa->grad_buffer();
          for (auto& v : g) v += self.grad[0];
        }
      },
      "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(
      std::move(shape), std::move(out), {a},
      [](Node& self) {
        if (auto* pa = grad_target(self, 0)) pa->accumulate(self.grad);
      },
      "reshape");
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin > end || end > a.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(a.shape()));
  }
  const auto stride = a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  const auto av = a.data();
  std::vector<double> out(av.begin() + begin * stride, av.begin() + end * stride);
  return make_result(
      std::move(shape), std::move(out), {a},
      [offset = begin * stride](Node& self) {
        if (auto* pa = grad_target(self, 0)) {
          auto& g = pa->grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
        }
      },
      "slice_rows");
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_bias");
  const auto rows = x.dim(0), cols = x.dim(1);
  if (bias.numel() != cols) {
    throw DimensionError("add_row_bias: bias of " + std::to_string(bias.numel()) + " for " +
                         std::to_string(cols) + " columns");
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  return make_result(
      x.shape(), std::move(out), {x, bias},
      [rows, cols](Node& self) {
        if (auto* px = grad_target(self, 0)) px->accumulate(self.grad);
        if (auto* pb = grad_target(self, 1)) {
          auto& g = pb->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
        }
      },
      "add_row_bias");
}

namespace {

void require_pair(const Tensor& a, const Tensor& b, const char* what) {
  require_matrix(a, what);
  require_matrix(b, what);
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError(std::string(what) + ": embedding dimensions differ (" + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()) + ")");
  }
}

Tensor weighted_sq_impl(const Tensor& a, const Tensor& b, std::vector<double> w, const char* name) {
  require_pair(a, b, name);
  const auto q = a.dim(0), k = b.dim(0), m = a.dim(1);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(q * k);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const double d = av[i * m + c] - bv[j * m + c];
        s += w[c] * d * d;
      }
      out[i * k + j] = s;
    }
  }
  return make_result(
      {q, k}, std::move(out), {a, b},
      [q, k, m, w = std::move(w)](Node& self) {
        const auto& x = self.parents[0]->data;
        const auto& y = self.parents[1]->data;
        auto* pa = grad_target(self, 0);
        auto* pb = grad_target(self, 1);
        std::vector<double>* ga = pa ? &pa->grad_buffer() : nullptr;
        std::vector<double>* gb = pb ? &pb->grad_buffer() : nullptr;
        for (std::size_t i = 0; i < q; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double g = self.grad[i * k + j];
            if (g == 0.0) continue;
            for (std::size_t c = 0; c < m; ++c) {
              const double d = 2.0 * w[c] * g * (x[i * m + c] - y[j * m + c]);
              if (ga) (*ga)[i * m + c] += d;
              if (gb) (*gb)[j * m + c] -= d;
            }
          }
        }
      },
      name);
}

std::vector<double> row_norms(std::span<const double> v, std::size_t rows, std::size_t cols, const char* what) {
  std::vector<double> n(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c] * v[r * cols + c];
    n[r] = std::sqrt(s);
    if (n[r] == 0.0) {
      throw DegenerateInputError(std::string(what) + ": row " + std::to_string(r) + " has zero norm");
    }
  }
  return n;
}

}  // namespace

Tensor pairwise_sq_euclidean(const Tensor& a, const Tensor& b) {
  require_pair(a, b, "pairwise_sq_euclidean");
  return weighted_sq_impl(a, b, std::vector<double>(a.dim(1), 1.0), "pairwise_sq_euclidean");
}

Tensor pairwise_weighted_sq(const Tensor& a, const Tensor& b, std::span<const double> weights) {
  require_pair(a, b, "pairwise_weighted_sq");
  if (weights.size() != a.dim(1)) throw DimensionError("pairwise_weighted_sq: weight count mismatch");
  for (double w : weights) {
    if (!(w > 0.0)) throw ContractError("pairwise_weighted_sq: weights must be positive");
  }
  return weighted_sq_impl(a, b, std::vector<double>(weights.begin(), weights.end()), "pairwise_weighted_sq");
}

Tensor pairwise_cosine(const Tensor& a, const Tensor& b) {
  require_pair(a, b, "pairwise_cosine");
  const auto q = a.dim(0), k = b.dim(0), m = a.dim(1);
  const auto av = a.data();
  const auto bv = b.data();
  auto na = row_norms(av, q, m, "pairwise_cosine");
  auto nb = row_norms(bv, k, m, "pairwise_cosine");
  std::vector<double> sim(q * k);
  std::vector<double> out(q * k);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += av[i * m + c] * bv[j * m + c];
      sim[i * k + j] = dot / (na[i] * nb[j]);
      out[i * k + j] = 1.0 - sim[i * k + j];
    }
  }
  return make_result(
      {q, k}, std::move(out), {a, b},
      [q, k, m, na = std::move(na), nb = std::move(nb), sim = std::move(sim)](Node& self) {
        const auto& x = self.parents[0]->data;
        const auto& y = self.parents[1]->data;
        auto* pa = grad_target(self, 0);
        auto* pb = grad_target(self, 1);
        std::vector<double>* ga = pa ? &pa->grad_buffer() : nullptr;
        std::vector<double>* gb = pb ? &pb->grad_buffer() : nullptr;
        for (std::size_t i = 0; i < q; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double g = self.grad[i * k + j];
            if (g == 0.0) continue;
            const double s = sim[i * k + j];
            const double inv = 1.0 / (na[i] * nb[j]);
            for (std::size_t c = 0; c < m; ++c) {
              const double xc = x[i * m + c], yc = y[j * m + c];
              if (ga) (*ga)[i * m + c] -= g * (yc * inv - s * xc / (na[i] * na[i]));
              if (gb) (*gb)[j * m + c] -= g * (xc * inv - s * yc / (nb[j] * nb[j]));
            }
          }
        }
      },
      "pairwise_cosine");
}

Tensor normalize_rows(const Tensor& a) {
  require_matrix(a, "normalize_rows");
  const auto rows = a.dim(0), cols = a.dim(1);
  const auto av = a.data();
  auto norms = row_norms(av, rows, cols, "normalize_rows");
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] / norms[r];
  return make_result(
      a.shape(), std::move(out), {a},
      [rows, cols, norms = std::move(norms)](Node& self) {
        auto* pa = grad_target(self, 0);
        if (!pa) return;
        auto& g = pa->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          double yg = 0.0;
          for (std::size_t c = 0; c < cols; ++c) yg += self.data[r * cols + c] * self.grad[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            g[r * cols + c] += (self.grad[r * cols + c] - self.data[r * cols + c] * yg) / norms[r];
          }
        }
      },
      "normalize_rows");
}

Tensor grouped_softmax_nll(const Tensor& logits, std::span<const std::size_t> column_group,
                           std::span<const std::size_t> labels) {
  require_matrix(logits, "grouped_softmax_nll");
  const auto q = logits.dim(0), c = logits.dim(1);
  if (column_group.size() != c) throw DimensionError("grouped_softmax_nll: one group per column required");
  if (labels.size() != q) throw DimensionError("grouped_softmax_nll: one label per row required");
  if (q == 0) throw ContractError("grouped_softmax_nll: no rows");
  const auto lv = logits.data();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // Per row: softmax over all columns, and softmax restricted to the true group.
  std::vector<double> p_all(q * c), p_group(q * c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const double* row = &lv[i * c];
    double mx = kNegInf, mg = kNegInf;
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      mx = std::max(mx, row[j]);
      if (column_group[j] == labels[i]) {
        mg = std::max(mg, row[j]);
        any = true;
      }
    }
    if (!any) throw ContractError("grouped_softmax_nll: label " + std::to_string(labels[i]) + " has no columns");
    double sa = 0.0, sg = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p_all[i * c + j] = std::exp(row[j] - mx);
      sa += p_all[i * c + j];
      if (column_group[j] == labels[i]) {
        p_group[i * c + j] = std::exp(row[j] - mg);
        sg += p_group[i * c + j];
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      p_all[i * c + j] /= sa;
      p_group[i * c + j] /= sg;
    }
    total += (mx + std::log(sa)) - (mg + std::log(sg));
  }
  const double inv_q = 1.0 / static_cast<double>(q);
  return make_result(
      {1}, {total * inv_q}, {logits},
      [q, c, inv_q, p_all = std::move(p_all), p_group = std::move(p_group)](Node& self) {
        auto* pl = grad_target(self, 0);
        if (!pl) return;
        auto& g = pl->grad_buffer();
        const double s = self.grad[0] * inv_q;
        for (std::size_t i = 0; i < q * c; ++i) g[i] += s * (p_all[i] - p_group[i]);
      },
      "grouped_softmax_nll");
}

BatchNormState::BatchNormState(std::size_t channels)
    : running_mean(Tensor::zeros({channels})), running_var(Tensor::full({channels}, 1.0)) {}

namespace {

struct BnLayout {
  std::size_t batch, channels, inner;
};

BnLayout bn_layout(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::size_t state_channels) {
  if (input.rank() < 2) throw DimensionError("batchnorm: input must be [B x C x ...]");
  BnLayout l{input.dim(0), input.dim(1), input.numel() / (input.dim(0) * input.dim(1))};
  if (gamma.numel() != l.channels || beta.numel() != l.channels || state_channels != l.channels) {
    throw DimensionError("batchnorm: parameter size does not match " + std::to_string(l.channels) + " channels");
  }
  return l;
}

}  // namespace

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool training) {
  if (!training) return batchnorm_eval(input, gamma, beta, state);
  const auto l = bn_layout(input, gamma, beta, state.running_mean.numel());
  if (l.batch < 2) throw ContractError("batchnorm: training mode needs a batch of at least 2, got " +
                                       std::to_string(l.batch));
  const auto xv = input.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  const double count = static_cast<double>(l.batch * l.inner);
  auto idx = [&l](std::size_t b, std::size_t ch, std::size_t s) { return (b * l.channels + ch) * l.inner + s; };

  std::vector<double> xhat(input.numel()), out(input.numel()), inv_std(l.channels);
  auto rm = state.running_mean.mutable_data();
  auto rv = state.running_var.mutable_data();
  for (std::size_t ch = 0; ch < l.channels; ++ch) {
    double mu = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t s = 0; s < l.inner; ++s) mu += xv[idx(b, ch, s)];
    mu /= count;
    double var = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t s = 0; s < l.inner; ++s) {
        const double d = xv[idx(b, ch, s)] - mu;
        var += d * d;
      }
    var /= count;
    inv_std[ch] = 1.0 / std::sqrt(var + state.epsilon);
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t s = 0; s < l.inner; ++s) {
        const auto i = idx(b, ch, s);
        xhat[i] = (xv[i] - mu) * inv_std[ch];
        out[i] = gv[ch] * xhat[i] + bv[ch];
      }
    rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu;
    rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * var * count / (count - 1.0);
  }

  return make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [l, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        auto idx = [&l](std::size_t b, std::size_t ch, std::size_t s) {
          return (b * l.channels + ch) * l.inner + s;
        };
        const auto& gam = self.parents[1]->data;
        auto* px = grad_target(self, 0);
        auto* pg = grad_target(self, 1);
        auto* pb = grad_target(self, 2);
        for (std::size_t ch = 0; ch < l.channels; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < l.batch; ++b)
            for (std::size_t s = 0; s < l.inner; ++s) {
              const auto i = idx(b, ch, s);
              sum_dy += self.grad[i];
              sum_dy_xhat += self.grad[i] * xhat[i];
            }
          if (pg) pg->grad_buffer()[ch] += sum_dy_xhat;
          if (pb) pb->grad_buffer()[ch] += sum_dy;
          if (px) {
            auto& gx = px->grad_buffer();
            const double k = gam[ch] * inv_std[ch] / count;
            for (std::size_t b = 0; b < l.batch; ++b)
              for (std::size_t s = 0; s < l.inner; ++s) {
                const auto i = idx(b, ch, s);
                gx[i] += k * (count * self.grad[i] - sum_dy - xhat[i] * sum_dy_xhat);
              }
          }
        }
      },
      "batchnorm");
}

Tensor batchnorm_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const BatchNormState& state) {
  const auto l = bn_layout(input, gamma, beta, state.running_mean.numel());
  const auto xv = input.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  const auto rm = state.running_mean.data();
  const auto rv = state.running_var.data();
  std::vector<double> inv_std(l.channels), out(input.numel()), xhat(input.numel());
  for (std::size_t ch = 0; ch < l.channels; ++ch) inv_std[ch] = 1.0 / std::sqrt(rv[ch] + state.epsilon);
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t ch = 0; ch < l.channels; ++ch)
      for (std::size_t s = 0; s < l.inner; ++s) {
        const auto i = (b * l.channels + ch) * l.inner + s;
        xhat[i] = (xv[i] - rm[ch]) * inv_std[ch];
        out[i] = gv[ch] * xhat[i] + bv[ch];
      }
  return make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [l, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gam = self.parents[1]->data;
        auto* px = grad_target(self, 0);
        auto* pg = grad_target(self, 1);
        auto* pb = grad_target(self, 2);
        for (std::size_t b = 0; b < l.batch; ++b)
          for (std::size_t ch = 0; ch < l.channels; ++ch)
            for (std::size_t s = 0; s < l.inner; ++s) {
              const auto i = (b * l.channels + ch) * l.inner + s;
              const double g = self.grad[i];
              if (px) px->grad_buffer()[i] += g * gam[ch] * inv_std[ch];
              if (pg) pg->grad_buffer()[ch] += g * xhat[i];
              if (pb) pb->grad_buffer()[ch] += g;
            }
      },
      "batchnorm_eval");
}

}  // namespace protonet

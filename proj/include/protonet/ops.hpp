#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protonet/tensor.hpp"

namespace protonet {

// Dense algebra ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise. Binary operands must share a shape, or one of them must hold a
// single value which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor negate(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);  // DomainError for negative input
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // DomainError for non-positive input

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return negate(a); }

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Shape plumbing --------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
// Rows [begin, end) along the leading dimension.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
// x[B x F] + bias[F] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// Metric-learning primitives ----------------------------------------------------

// out(q, k) = sum_m (a(q,m) - b(k,m))^2
Tensor pairwise_sq_euclidean(const Tensor& a, const Tensor& b);
// out(q, k) = sum_m w(m) (a(q,m) - b(k,m))^2, w held constant.
Tensor pairwise_weighted_sq(const Tensor& a, const Tensor& b, std::span<const double> weights);
// out(q, k) = 1 - <a_q, b_k> / (|a_q| |b_k|). DegenerateInputError on zero rows.
Tensor pairwise_cosine(const Tensor& a, const Tensor& b);
// Each row divided by its Euclidean norm. DegenerateInputError on zero rows.
Tensor normalize_rows(const Tensor& a);

/// Mean negative log of grouped softmax mass.
///
/// For each row q of `logits` [Q x C], with the columns partitioned into
/// groups by `column_group`, returns the mean over rows of
///   logsumexp_j(logits(q, j)) - logsumexp_{j : group(j) = label(q)} logits(q, j).
/// With one column per group this is ordinary softmax cross-entropy.
Tensor grouped_softmax_nll(const Tensor& logits, std::span<const std::size_t> column_group,
                           std::span<const std::size_t> labels);

// Normalization -------------------------------------------------------------------

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  explicit BatchNormState(std::size_t channels = 0);
};

/// Batch normalization over input [B x C x ...]. Statistics are taken per
/// channel across the batch and every trailing position. In training mode
/// the batch statistics are used (B >= 2 required) and `state` is updated as
/// running <- (1 - momentum) running + momentum batch, with the unbiased
/// batch variance feeding the running variance. In evaluation mode the
/// running statistics are used and `state` is left untouched.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, bool training);
Tensor batchnorm_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                      const BatchNormState& state);

// Convolution and pooling ----------------------------------------------------------

/// 3x3 cross-correlation with one pixel of zero padding. `input` is
/// [C_in x H x W] or [N x C_in x H x W]; `kernels` is [C_out x C_in x 3 x 3].
Tensor conv2d(const Tensor& input, const Tensor& kernels);

/// 2x2 max pooling with stride 2 over [C x H x W] or [N x C x H x W].
/// Output extent per axis is floor(n / 2), except that an axis of length 1
/// stays length 1. Ties route the gradient to the first element in
/// row-major window order.
Tensor maxpool2d(const Tensor& input);

std::size_t pooled_extent(std::size_t n);

}  // namespace protonet

#pragma once

#include <cstddef>
#include <span>

#include "normkd/numcore/tape.hpp"

namespace normkd {

enum class StdKind {
  kCorrected,   // divide by C - 1 (Bessel)
  kPopulation,  // divide by C
};

// Differentiable primitives. All operands must live on the same tape.

/// input[N x D] * weight[D x H] + bias[1 x H].
Var affine(Var input, Var weight, Var bias);
Var matmul(Var a, Var b);
/// max(0, x); the subgradient at exactly 0 is 0.
Var relu(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// x / divisor elementwise.
Var div_scalar(Var x, double divisor);
Var square(Var x);
Var exp(Var x);
Var log(Var x);
/// max(x, floor) elementwise; gradient passes only where x > floor.
Var clamp_min(Var x, double floor);

/// x[n, c] / s[n]; `s` is N x 1.
Var div_rows(Var x, Var s);
/// x[n, c] * s[n]; `s` is N x 1.
Var mul_rows(Var x, Var s);

/// Row-wise log-softmax with max subtraction.
Var log_softmax_rows(Var x);
/// Elementwise log((1/k) * sum_i exp(x_i)), stabilized; k >= 1 same-shape operands.
Var log_mean_exp(std::span<const Var> terms);

Var sum_rows(Var x);  // N x C -> N x 1
Var sum_all(Var x);   // -> 1 x 1
Var mean_all(Var x);  // -> 1 x 1
/// Row-wise standard deviation, N x C -> N x 1. C must be >= 2 for kCorrected.
Var row_std(Var x, StdKind kind = StdKind::kCorrected);
/// Row-wise max / min, N x 1. Gradient routes to the first extremal index.
Var row_max(Var x);
Var row_min(Var x);
/// x[n, labels[n]], N x 1.
Var pick(Var x, std::span<const std::size_t> labels);

}  // namespace normkd

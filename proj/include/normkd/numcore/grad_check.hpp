#pragma once

#include <functional>

#include "normkd/numcore/matrix.hpp"
#include "normkd/numcore/tape.hpp"

namespace normkd {

using ScalarFn = std::function<double(const Matrix&)>;
using GradientFn = std::function<Matrix(const Matrix&)>;
/// Builds a scalar graph on `tape` from the differentiable input `x`.
using GraphFn = std::function<Var(Tape& tape, Var x)>;

/// Max over coordinates of |analytic - central| / max(1e-12, |central|),
/// where central = (f(x + h e_i) - f(x - h e_i)) / 2h.
/// Throws ContractError for step <= 0 and NumericError when f is not finite
/// at a probe point.
double grad_check(const ScalarFn& value, const GradientFn& gradient, const Matrix& point,
                  double step);

/// Same check with the analytic gradient taken from a tape backward pass.
double grad_check(const GraphFn& graph, const Matrix& point, double step);

/// Evaluates `graph` at `point` and returns (value, gradient).
std::pair<double, Matrix> value_and_gradient(const GraphFn& graph, const Matrix& point);

}  // namespace normkd

#include "normkd/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "normkd/error.hpp"

namespace normkd {

double grad_check(const ScalarFn& value, const GradientFn& gradient, const Matrix& point,
                  double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  const Matrix analytic = gradient(point);
  if (!analytic.same_shape(point)) {
    throw DimensionError("grad_check: gradient shape " + analytic.shape_string() +
                         " differs from point " + point.shape_string());
  }
  double worst = 0.0;
  Matrix probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point.data()[i];
    probe.data()[i] = x0 + step;
    const double up = value(probe);
    probe.data()[i] = x0 - step;
    const double down = value(probe);
    probe.data()[i] = x0;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite function value probing coordinate " +
                         std::to_string(i));
    }
    const double central = (up - down) / (2.0 * step);
    const double err = std::abs(analytic.data()[i] - central) / std::max(1e-12, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

std::pair<double, Matrix> value_and_gradient(const GraphFn& graph, const Matrix& point) {
  Tape tape;
  const Var x = tape.leaf(point);
  const Var out = graph(tape, x);
  const Gradients grads = tape.backward(out);
  return {out.value()(0, 0), grads[x]};
}

double grad_check(const GraphFn& graph, const Matrix& point, double step) {
  const ScalarFn forward_only = [&](const Matrix& m) {
    Tape tape;
    return graph(tape, tape.leaf(m)).value()(0, 0);
  };
  return grad_check(forward_only,
                    [&](const Matrix& m) { return value_and_gradient(graph, m).second; }, point,
                    step);
}

}  // namespace normkd

#include "normkd/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "normkd/error.hpp"

namespace normkd {
namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands must share one tape");
  }
  return a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

void require_row_scalar(const Matrix& x, const Matrix& s, const char* op) {
  if (s.cols() != 1 || s.rows() != x.rows()) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(x.rows()) +
                         "x1 row scalars, got " + s.shape_string());
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Tape& tape = x.tape();
  const Matrix& in = x.value();
  Matrix out(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.size(); ++i) out.data()[i] = fwd(in.data()[i]);
  const std::size_t xi = x.index();
  return tape.record(out, {xi}, [in, out, xi, deriv](const Matrix& g, std::vector<Matrix>& grads) {
    Matrix dx(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.size(); ++i) {
      dx.data()[i] = g.data()[i] * deriv(in.data()[i], out.data()[i]);
    }
    Tape::accumulate(grads, xi, dx);
  });
}

Matrix matmul_values(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename Better>
Var row_extremum(Var x, Better better, const char* op) {
  const Matrix& in = x.value();
  if (in.cols() == 0) throw DimensionError(std::string(op) + ": empty rows");
  Matrix out(in.rows(), 1);
  std::vector<std::size_t> where(in.rows(), 0);
  for (std::size_t n = 0; n < in.rows(); ++n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < in.cols(); ++c) {
      if (better(in(n, c), in(n, best))) best = c;
    }
    where[n] = best;
    out(n, 0) = in(n, best);
  }
  const std::size_t xi = x.index();
  const std::size_t rows = in.rows();
  const std::size_t cols = in.cols();
  return x.tape().record(out, {xi}, [=](const Matrix& g, std::vector<Matrix>& grads) {
    Matrix dx(rows, cols);
    for (std::size_t n = 0; n < rows; ++n) dx(n, where[n]) = g(n, 0);
    Tape::accumulate(grads, xi, dx);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: cannot multiply " + av.shape_string() + " by " +
                         bv.shape_string());
  }
  const std::size_t ai = a.index();
  const std::size_t bi = b.index();
  const bool need_a = tape.requires_grad(ai);
  const bool need_b = tape.requires_grad(bi);
  return tape.record(matmul_values(av, bv), {ai, bi},
                     [av, bv, ai, bi, need_a, need_b](const Matrix& g, std::vector<Matrix>& grads) {
                       if (need_a) Tape::accumulate(grads, ai, matmul_nt(g, bv));
                       if (need_b) Tape::accumulate(grads, bi, matmul_tn(av, g));
                     });
}

Var affine(Var input, Var weight, Var bias) {
  Tape& tape = same_tape(input, weight, "affine");
  same_tape(input, bias, "affine");
  const Matrix& x = input.value();
  const Matrix& w = weight.value();
  const Matrix& b = bias.value();
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("affine: input " + x.shape_string() + ", weight " + w.shape_string() +
                         ", bias " + b.shape_string() + " do not agree");
  }
  Matrix out = matmul_values(x, w);
  for (std::size_t n = 0; n < out.rows(); ++n) {
    for (std::size_t h = 0; h < out.cols(); ++h) out(n, h) += b(0, h);
  }
  const std::size_t xi = input.index();
  const std::size_t wi = weight.index();
  const std::size_t bi = bias.index();
  const bool need_x = tape.requires_grad(xi);
  const bool need_w = tape.requires_grad(wi);
  const bool need_b = tape.requires_grad(bi);
  return tape.record(std::move(out), {xi, wi, bi},
                     [x, w, xi, wi, bi, need_x, need_w, need_b](const Matrix& g,
                                                               std::vector<Matrix>& grads) {
                       if (need_x) Tape::accumulate(grads, xi, matmul_nt(g, w));
                       if (need_w) Tape::accumulate(grads, wi, matmul_tn(x, g));
                       if (need_b) {
                         Matrix db(1, g.cols());
                         for (std::size_t n = 0; n < g.rows(); ++n) {
                           for (std::size_t h = 0; h < g.cols(); ++h) db(0, h) += g(n, h);
                         }
                         Tape::accumulate(grads, bi, db);
                       }
                     });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  out += b.value();
  const std::size_t ai = a.index();
  const std::size_t bi = b.index();
  const bool need_a = tape.requires_grad(ai);
  const bool need_b = tape.requires_grad(bi);
  return tape.record(std::move(out), {ai, bi},
                     [=](const Matrix& g, std::vector<Matrix>& grads) {
                       if (need_a) Tape::accumulate(grads, ai, g);
                       if (need_b) Tape::accumulate(grads, bi, g);
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  const std::size_t ai = a.index();
  const std::size_t bi = b.index();
  const bool need_a = tape.requires_grad(ai);
  const bool need_b = tape.requires_grad(bi);
  return tape.record(std::move(out), {ai, bi},
                     [=](const Matrix& g, std::vector<Matrix>& grads) {
                       if (need_a) Tape::accumulate(grads, ai, g);
                       if (need_b) {
                         Matrix neg = g;
                         for (double& v : neg.data()) v = -v;
                         Tape::accumulate(grads, bi, neg);
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_same_shape(av, bv, "mul");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * bv.data()[i];
  const std::size_t ai = a.index();
  const std::size_t bi = b.index();
  const bool need_a = tape.requires_grad(ai);
  const bool need_b = tape.requires_grad(bi);
  return tape.record(std::move(out), {ai, bi},
                     [=](const Matrix& g, std::vector<Matrix>& grads) {
                       if (need_a) {
                         Matrix da(g.rows(), g.cols());
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           da.data()[i] = g.data()[i] * bv.data()[i];
                         }
                         Tape::accumulate(grads, ai, da);
                       }
                       if (need_b) {
                         Matrix db(g.rows(), g.cols());
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           db.data()[i] = g.data()[i] * av.data()[i];
                         }
                         Tape::accumulate(grads, bi, db);
                       }
                     });
}

Var scale(Var x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var div_scalar(Var x, double divisor) {
  return unary(
      x, [divisor](double v) { return v / divisor; },
      [divisor](double, double) { return 1.0 / divisor; });
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Var clamp_min(Var x, double floor) {
  return unary(
      x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double in, double) { return in > floor ? 1.0 : 0.0; });
}

Var div_rows(Var x, Var s) {
  Tape& tape = same_tape(x, s, "div_rows");
  const Matrix& xv = x.value();
  const Matrix& sv = s.value();
  require_row_scalar(xv, sv, "div_rows");
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t n = 0; n < xv.rows(); ++n) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out(n, c) = xv(n, c) / sv(n, 0);
  }
  const std::size_t xi = x.index();
  const std::size_t si = s.index();
  const bool need_x = tape.requires_grad(xi);
  const bool need_s = tape.requires_grad(si);
  return tape.record(out, {xi, si}, [=](const Matrix& g, std::vector<Matrix>& grads) {
    if (need_x) {
      Matrix dx(g.rows(), g.cols());
      for (std::size_t n = 0; n < g.rows(); ++n) {
        for (std::size_t c = 0; c < g.cols(); ++c) dx(n, c) = g(n, c) / sv(n, 0);
      }
      Tape::accumulate(grads, xi, dx);
    }
    if (need_s) {
      // d(x/s)/ds = -(x/s)/s
      Matrix ds(g.rows(), 1);
      for (std::size_t n = 0; n < g.rows(); ++n) {
        double acc = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) acc += g(n, c) * out(n, c);
        ds(n, 0) = -acc / sv(n, 0);
      }
      Tape::accumulate(grads, si, ds);
    }
  });
}

Var mul_rows(Var x, Var s) {
  Tape& tape = same_tape(x, s, "mul_rows");
  const Matrix& xv = x.value();
  const Matrix& sv = s.value();
  require_row_scalar(xv, sv, "mul_rows");
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t n = 0; n < xv.rows(); ++n) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out(n, c) = xv(n, c) * sv(n, 0);
  }
  const std::size_t xi = x.index();
  const std::size_t si = s.index();
  const bool need_x = tape.requires_grad(xi);
  const bool need_s = tape.requires_grad(si);
  return tape.record(std::move(out), {xi, si}, [=](const Matrix& g, std::vector<Matrix>& grads) {
    if (need_x) {
      Matrix dx(g.rows(), g.cols());
      for (std::size_t n = 0; n < g.rows(); ++n) {
        for (std::size_t c = 0; c < g.cols(); ++c) dx(n, c) = g(n, c) * sv(n, 0);
      }
      Tape::accumulate(grads, xi, dx);
    }
    if (need_s) {
      Matrix ds(g.rows(), 1);
      for (std::size_t n = 0; n < g.rows(); ++n) {
        double acc = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) acc += g(n, c) * xv(n, c);
        ds(n, 0) = acc;
      }
      Tape::accumulate(grads, si, ds);
    }
  });
}

Var log_softmax_rows(Var x) {
  const Matrix& in = x.value();
  if (in.cols() == 0) throw DimensionError("log_softmax_rows: empty rows");
  Matrix out(in.rows(), in.cols());
  for (std::size_t n = 0; n < in.rows(); ++n) {
    const auto row = in.row(n);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    for (std::size_t c = 0; c < in.cols(); ++c) out(n, c) = row[c] - lse;
  }
  const std::size_t xi = x.index();
  return x.tape().record(out, {xi}, [out, xi](const Matrix& g, std::vector<Matrix>& grads) {
    Matrix dx(g.rows(), g.cols());
    for (std::size_t n = 0; n < g.rows(); ++n) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) gsum += g(n, c);
      for (std::size_t c = 0; c < g.cols(); ++c) {
        dx(n, c) = g(n, c) - std::exp(out(n, c)) * gsum;
      }
    }
    Tape::accumulate(grads, xi, dx);
  });
}

Var log_mean_exp(std::span<const Var> terms) {
  if (terms.empty()) throw ContractError("log_mean_exp: no terms");
  if (terms.size() == 1) return terms.front();
  Tape& tape = terms.front().tape();
  const Matrix& first = terms.front().value();
  std::vector<std::size_t> parents;
  std::vector<Matrix> inputs;
  for (const Var& t : terms) {
    same_tape(terms.front(), t, "log_mean_exp");
    require_same_shape(first, t.value(), "log_mean_exp");
    parents.push_back(t.index());
    inputs.push_back(t.value());
  }
  const double k = static_cast<double>(terms.size());
  Matrix out(first.rows(), first.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double m = inputs[0].data()[i];
    for (const Matrix& in : inputs) m = std::max(m, in.data()[i]);
    double sum = 0.0;
    for (const Matrix& in : inputs) sum += std::exp(in.data()[i] - m);
    out.data()[i] = m + std::log(sum / k);
  }
  std::vector<bool> needs;
  for (std::size_t p : parents) needs.push_back(tape.requires_grad(p));
  return tape.record(out, parents, [=](const Matrix& g, std::vector<Matrix>& grads) {
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      if (!needs[t]) continue;
      Matrix dx(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) {
        dx.data()[i] = g.data()[i] * std::exp(inputs[t].data()[i] - out.data()[i]) / k;
      }
      Tape::accumulate(grads, parents[t], dx);
    }
  });
}

Var sum_rows(Var x) {
  const Matrix& in = x.value();
  Matrix out(in.rows(), 1);
  for (std::size_t n = 0; n < in.rows(); ++n) {
    double acc = 0.0;
    for (double v : in.row(n)) acc += v;
    out(n, 0) = acc;
  }
  const std::size_t xi = x.index();
  const std::size_t cols = in.cols();
  return x.tape().record(std::move(out), {xi}, [xi, cols](const Matrix& g, std::vector<Matrix>& grads) {
    Matrix dx(g.rows(), cols);
    for (std::size_t n = 0; n < g.rows(); ++n) {
      for (std::size_t c = 0; c < cols; ++c) dx(n, c) = g(n, 0);
    }
    Tape::accumulate(grads, xi, dx);
  });
}

Var sum_all(Var x) {
  const Matrix& in = x.value();
  double acc = 0.0;
  for (double v : in.data()) acc += v;
  const std::size_t xi = x.index();
  const std::size_t rows = in.rows();
  const std::size_t cols = in.cols();
  return x.tape().record(Matrix(1, 1, acc), {xi}, [=](const Matrix& g, std::vector<Matrix>& grads) {
    Tape::accumulate(grads, xi, Matrix(rows, cols, g(0, 0)));
  });
}

Var mean_all(Var x) {
  const Matrix& in = x.value();
  if (in.size() == 0) throw ContractError("mean_all: empty matrix");
  double acc = 0.0;
  for (double v : in.data()) acc += v;
  const double count = static_cast<double>(in.size());
  const std::size_t xi = x.index();
  const std::size_t rows = in.rows();
  const std::size_t cols = in.cols();
  return x.tape().record(Matrix(1, 1, acc / count), {xi},
                         [=](const Matrix& g, std::vector<Matrix>& grads) {
                           Tape::accumulate(grads, xi, Matrix(rows, cols, g(0, 0) / count));
                         });
}

Var row_std(Var x, StdKind kind) {
  const Matrix& in = x.value();
  const std::size_t c = in.cols();
  const std::size_t dof_loss = kind == StdKind::kCorrected ? 1 : 0;
  if (c < 2) throw ContractError("row_std: need at least 2 columns, got " + std::to_string(c));
  const double denom = static_cast<double>(c - dof_loss);
  Matrix out(in.rows(), 1);
  Matrix centered(in.rows(), c);
  for (std::size_t n = 0; n < in.rows(); ++n) {
    double mean = 0.0;
    for (double v : in.row(n)) mean += v;
    mean /= static_cast<double>(c);
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      centered(n, j) = in(n, j) - mean;
      ss += centered(n, j) * centered(n, j);
    }
    out(n, 0) = std::sqrt(ss / denom);
  }
  const std::size_t xi = x.index();
  return x.tape().record(out, {xi}, [=](const Matrix& g, std::vector<Matrix>& grads) {
    Matrix dx(centered.rows(), c);
    for (std::size_t n = 0; n < centered.rows(); ++n) {
      const double sigma = out(n, 0);
      if (sigma == 0.0) continue;  // subgradient 0 at constant rows
      for (std::size_t j = 0; j < c; ++j) dx(n, j) = g(n, 0) * centered(n, j) / (denom * sigma);
    }
    Tape::accumulate(grads, xi, dx);
  });
}

Var row_max(Var x) {
  return row_extremum(x, [](double a, double b) { return a > b; }, "row_max");
}

Var row_min(Var x) {
  return row_extremum(x, [](double a, double b) { return a < b; }, "row_min");
}

Var pick(Var x, std::span<const std::size_t> labels) {
  const Matrix& in = x.value();
  if (labels.size() != in.rows()) {
    throw DimensionError("pick: " + std::to_string(labels.size()) + " labels for " +
                         in.shape_string() + " input");
  }
  Matrix out(in.rows(), 1);
  std::vector<std::size_t> cols(labels.begin(), labels.end());
  for (std::size_t n = 0; n < in.rows(); ++n) {
    if (cols[n] >= in.cols()) {
      throw ContractError("pick: label " + std::to_string(cols[n]) + " out of range [0, " +
                          std::to_string(in.cols()) + ")");
    }
    out(n, 0) = in(n, cols[n]);
  }
  const std::size_t xi = x.index();
  const std::size_t width = in.cols();
  return x.tape().record(std::move(out), {xi}, [=](const Matrix& g, std::vector<Matrix>& grads) {
    Matrix dx(g.rows(), width);
    for (std::size_t n = 0; n < g.rows(); ++n) dx(n, cols[n]) = g(n, 0);
    Tape::accumulate(grads, xi, dx);
  });
}

}  // namespace normkd

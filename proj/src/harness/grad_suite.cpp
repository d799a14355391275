#include "normkd/harness/grad_suite.hpp"

#include <algorithm>
#include <functional>

#include "normkd/distill.hpp"
#include "normkd/harness/files.hpp"
#include "normkd/numcore/grad_check.hpp"
#include "normkd/random.hpp"

namespace normkd::harness {
namespace {

constexpr double kMinSeparation = 1e-2;

struct Instance {
  Matrix student;
  Matrix teacher;
  std::vector<std::size_t> labels;
  double temperature;
  double alpha;
  double beta;
};

bool well_separated(std::span<const double> row) {
  std::vector<double> sorted(row.begin(), row.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  return sorted[n - 1] >= 0.5 && sorted[n - 1] - sorted[n - 2] >= kMinSeparation &&
         sorted[1] - sorted[0] >= kMinSeparation;
}

Matrix random_logits(CounterStream& rng, std::size_t rows, std::size_t classes, bool separated) {
  Matrix m(rows, classes);
  for (std::size_t r = 0; r < rows; ++r) {
    do {
      const double scale = rng.uniform(0.5, 3.0);
      for (double& v : m.row(r)) v = scale * rng.normal();
    } while (separated && !well_separated(m.row(r)));
  }
  return m;
}

Instance make_instance(const GradSuiteOptions& o, std::uint64_t stream) {
  CounterStream rng(o.seed, stream);
  Instance in{random_logits(rng, o.rows, o.classes, true),
              random_logits(rng, o.rows, o.classes, false),
              {},
              rng.uniform(1.0, 8.0),
              rng.uniform(0.0, 1.0),
              rng.uniform(0.1, 1.0)};
  for (std::size_t r = 0; r < o.rows; ++r) in.labels.push_back(rng.below(o.classes));
  return in;
}

using LossBuilder = std::function<Var(Tape&, Var, const Instance&)>;

struct NamedLoss {
  const char* name;
  LossBuilder build;
};

std::vector<NamedLoss> all_losses() {
  static const std::vector<double> kTemps{1.0, 2.0, 4.0};
  return {
      {"kd_loss",
       [](Tape&, Var s, const Instance& in) {
         return kd_loss(s, in.teacher, in.labels, in.temperature, in.alpha, in.beta).total;
       }},
      {"multi_temp_kld",
       [](Tape&, Var s, const Instance& in) { return multi_temp_kld(s, in.teacher, kTemps); }},
      {"normkd_loss",
       [](Tape&, Var s, const Instance& in) {
         return normkd_loss(s, in.teacher, in.temperature / 2.0).total;
       }},
      {"maxval_loss",
       [](Tape&, Var s, const Instance& in) {
         return distill_loss(TemperatureRule::max_val(in.temperature / 2.0), s, in.teacher,
                             in.labels, in.alpha, in.beta)
             .total;
       }},
      {"range_loss",
       [](Tape&, Var s, const Instance& in) {
         return distill_loss(TemperatureRule::range(in.temperature / 4.0), s, in.teacher,
                             in.labels, in.alpha, in.beta)
             .total;
       }},
      {"combine",
       [](Tape&, Var s, const Instance& in) {
         const Var kd = kd_loss(s, in.teacher, in.labels, in.temperature, in.alpha, in.beta).total;
         const Var nkd = normkd_loss(s, in.teacher, 2.0).total;
         const WeightedTerm terms[] = {{0.3, kd}, {0.7, nkd}};
         return combine(terms);
       }},
  };
}

}  // namespace

bool GradSuiteReport::all_pass() const noexcept {
  return !rows.empty() &&
         std::all_of(rows.begin(), rows.end(), [](const GradSuiteRow& r) { return r.pass; });
}

GradSuiteReport run_grad_suite(const GradSuiteOptions& options) {
  GradSuiteReport report;
  std::uint64_t loss_index = 0;
  for (const NamedLoss& loss : all_losses()) {
    GradSuiteRow row{loss.name, options.instances, 0.0, false};
    for (std::size_t i = 0; i < options.instances; ++i) {
      const Instance in = make_instance(options, 1000 * (loss_index + 1) + i);
      const GraphFn graph = [&](Tape& tape, Var x) { return loss.build(tape, x, in); };
      const ScalarFn value = [&](const Matrix& x) { return value_and_gradient(graph, x).first; };
      const GradientFn gradient = [&](const Matrix& x) {
        Matrix g = value_and_gradient(graph, x).second;
        if (options.inject_fault) {
          for (double& v : g.data()) v = -v;
        }
        return g;
      };
      row.max_relative_error = std::max(
          row.max_relative_error, grad_check(value, gradient, in.student, options.step));
    }
    row.pass = row.max_relative_error <= kGradTolerance;
    report.rows.push_back(std::move(row));
    ++loss_index;
  }
  return report;
}

std::string grad_suite_csv(const GradSuiteReport& report) {
  CsvWriter csv({"loss", "instances", "max_rel_error", "status"});
  for (const GradSuiteRow& r : report.rows) {
    csv.add_row({r.loss, std::to_string(r.instances), format_double(r.max_relative_error),
                 r.pass ? "PASS" : "FAIL"});
  }
  return csv.str();
}

}  // namespace normkd::harness

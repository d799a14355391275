#include "normkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "normkd/error.hpp"

namespace normkd {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_pair(const Matrix& student, const Matrix& teacher) {
  if (!student.same_shape(teacher)) {
    throw DimensionError("student logits " + student.shape_string() +
                         " and teacher logits " + teacher.shape_string() + " differ in shape");
  }
  if (student.rows() == 0) throw ContractError("empty batch");
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ContractError(std::string(what) + " must be finite and strictly positive");
  }
}

// Per-row sum over classes of p_t (log p_t - log p_s); N x 1.
Var kl_rows(Var log_ps, Var log_pt) {
  return sum_rows(mul(exp(log_pt), sub(log_pt, log_ps)));
}

Var softened_log_probs(Var logits, double temperature) {
  return log_softmax_rows(div_scalar(logits, temperature));
}

Var multi_log_probs(Var logits, std::span<const double> temperatures) {
  std::vector<Var> terms;
  terms.reserve(temperatures.size());
  for (double t : temperatures) terms.push_back(softened_log_probs(logits, t));
  return log_mean_exp(terms);
}

// Per-sample temperature column max(stat, epsilon) * factor for the
// per-sample rules.
Var per_sample_temperatures(Var logits, const TemperatureRule& rule) {
  return std::visit(
      Overloaded{[&](const rules::NormStd& r) {
                   return scale(clamp_min(row_std(logits, r.std_kind), r.epsilon), r.t_norm);
                 },
                 [&](const rules::MaxVal& r) {
                   return scale(clamp_min(row_max(logits), r.epsilon), r.t_v);
                 },
                 [&](const rules::Range& r) {
                   return scale(clamp_min(sub(row_max(logits), row_min(logits)), r.epsilon),
                                r.t_v);
                 },
                 [](const auto&) -> Var {
                   throw ContractError("rule has no per-sample temperature");
                 }},
      rule.variant());
}

struct KldTerm {
  Var kld;
  std::vector<double> weights;
};

KldTerm per_sample_kld(const TemperatureRule& rule, Var student, const Matrix& teacher_logits,
                       const DistillOptions& options) {
  require_pair(student.value(), teacher_logits);
  Tape& tape = student.tape();
  const Var teacher = tape.constant(teacher_logits);

  Var student_temps = per_sample_temperatures(student, rule);
  if (options.detach_student_scale) student_temps = tape.constant(student_temps.value());
  const Var teacher_temps = per_sample_temperatures(teacher, rule);

  const Var log_ps = log_softmax_rows(div_rows(student, student_temps));
  const Var log_pt = log_softmax_rows(div_rows(teacher, teacher_temps));
  const Var weights = square(teacher_temps);
  const Var kld = mean_all(mul(kl_rows(log_ps, log_pt), weights));

  const auto w = weights.value().data();
  return {kld, std::vector<double>(w.begin(), w.end())};
}

LossReport make_report(Var total, Var ce, Var kld, double alpha, double beta,
                       std::vector<double> weights, std::size_t batch) {
  LossReport r;
  r.total = total.value()(0, 0);
  r.ce_part = ce.valid() ? ce.value()(0, 0) : 0.0;
  r.kld_part = kld.value()(0, 0);
  r.alpha = alpha;
  r.beta = beta;
  r.per_sample_weight = std::move(weights);
  r.batch_size = batch;
  return r;
}

LossTerms assemble(Var ce, Var kld, double alpha, double beta, std::vector<double> weights) {
  const std::size_t batch = weights.size();
  const Var total = add(scale(ce, alpha), scale(kld, beta));
  return {total, ce, kld, make_report(total, ce, kld, alpha, beta, std::move(weights), batch)};
}

}  // namespace

SoftDistribution SoftDistribution::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw ContractError("distribution must have at least one entry");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("probability outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw NumericError("probabilities do not sum to 1");
  return SoftDistribution(std::move(probs));
}

SoftDistribution soften(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("soften: temperature must be strictly positive");
  if (logits.empty()) throw ContractError("soften: empty logits");
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = logits[i] / temperature;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return SoftDistribution(std::move(p));
}

SoftDistribution norm_soften(std::span<const double> logits, double t_norm, double epsilon,
                             StdKind kind) {
  return soften(logits, temperature_for(TemperatureRule::norm_std(t_norm, epsilon, kind), logits));
}

SoftDistribution multi_temp_prediction(std::span<const double> logits,
                                       std::span<const double> temperatures) {
  if (temperatures.empty()) throw ContractError("multi_temp_prediction: empty temperature set");
  std::vector<double> acc(logits.size(), 0.0);
  for (double t : temperatures) {
    const SoftDistribution p = soften(logits, t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  const double k = static_cast<double>(temperatures.size());
  for (double& v : acc) v /= k;
  return SoftDistribution(std::move(acc));
}

double kl_divergence(const SoftDistribution& teacher, const SoftDistribution& student) {
  if (teacher.size() != student.size()) {
    throw DimensionError("kl_divergence: sizes " + std::to_string(teacher.size()) + " and " +
                         std::to_string(student.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double pt = teacher[i];
    if (pt == 0.0) continue;
    const double ps = student[i];
    if (ps == 0.0) {
      throw NumericError("kl_divergence: student has zero mass at class " + std::to_string(i) +
                         " where the teacher does not");
    }
    sum += pt * (std::log(pt) - std::log(ps));
  }
  return std::max(sum, 0.0);
}

Var cross_entropy(Var student_logits, std::span<const std::size_t> labels) {
  const Matrix& z = student_logits.value();
  if (labels.size() != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         z.shape_string() + " logits");
  }
  for (std::size_t y : labels) {
    if (y >= z.cols()) {
      throw ContractError("label " + std::to_string(y) + " out of range [0, " +
                          std::to_string(z.cols()) + ")");
    }
  }
  return scale(mean_all(pick(log_softmax_rows(student_logits), labels)), -1.0);
}

LossTerms kd_loss(Var student_logits, const Matrix& teacher_logits,
                  std::span<const std::size_t> labels, double temperature, double alpha,
                  double beta) {
  require_positive(temperature, "temperature");
  require_pair(student_logits.value(), teacher_logits);
  const Var ce = cross_entropy(student_logits, labels);
  const Var kld = multi_temp_kld(student_logits, teacher_logits, std::span(&temperature, 1));
  return assemble(ce, kld, alpha, beta,
                  std::vector<double>(teacher_logits.rows(), temperature * temperature));
}

Var multi_temp_kld(Var student_logits, const Matrix& teacher_logits,
                   std::span<const double> temperatures) {
  if (temperatures.empty()) throw ContractError("multi_temp_kld: empty temperature set");
  for (double t : temperatures) require_positive(t, "temperature");
  require_pair(student_logits.value(), teacher_logits);
  Tape& tape = student_logits.tape();
  const Var teacher = tape.constant(teacher_logits);
  const double t_mul = *std::max_element(temperatures.begin(), temperatures.end());
  const Var log_ps = multi_log_probs(student_logits, temperatures);
  const Var log_pt = multi_log_probs(teacher, temperatures);
  return scale(mean_all(kl_rows(log_ps, log_pt)), t_mul * t_mul);
}

LossTerms normkd_loss(Var student_logits, const Matrix& teacher_logits, double t_norm,
                      double epsilon, const DistillOptions& options, StdKind kind) {
  if (teacher_logits.cols() < 2) throw ContractError("normkd_loss: need at least 2 classes");
  const TemperatureRule rule = TemperatureRule::norm_std(t_norm, epsilon, kind);
  KldTerm term = per_sample_kld(rule, student_logits, teacher_logits, options);
  const std::size_t batch = term.weights.size();
  return {term.kld, Var{}, term.kld,
          make_report(term.kld, Var{}, term.kld, 0.0, 1.0, std::move(term.weights), batch)};
}

LossTerms distill_loss(const TemperatureRule& rule, Var student_logits,
                       const Matrix& teacher_logits, std::span<const std::size_t> labels,
                       double alpha, double beta, const DistillOptions& options) {
  if (const auto* fixed = std::get_if<rules::Fixed>(&rule.variant())) {
    return kd_loss(student_logits, teacher_logits, labels, fixed->temperature, alpha, beta);
  }
  require_pair(student_logits.value(), teacher_logits);
  const Var ce = cross_entropy(student_logits, labels);
  if (const auto* multi = std::get_if<rules::MultiSet>(&rule.variant())) {
    const Var kld = multi_temp_kld(student_logits, teacher_logits, multi->temperatures);
    const double t_mul =
        *std::max_element(multi->temperatures.begin(), multi->temperatures.end());
    return assemble(ce, kld, alpha, beta,
                    std::vector<double>(teacher_logits.rows(), t_mul * t_mul));
  }
  KldTerm term = per_sample_kld(rule, student_logits, teacher_logits, options);
  return assemble(ce, term.kld, alpha, beta, std::move(term.weights));
}

Var combine(std::span<const WeightedTerm> terms) {
  if (terms.empty()) throw ContractError("combine: no terms");
  Var acc = scale(terms.front().term, terms.front().weight);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    acc = add(acc, scale(terms[i].term, terms[i].weight));
  }
  return acc;
}

LossReport kd_loss(const Matrix& student_logits, const Matrix& teacher_logits,
                   std::span<const std::size_t> labels, double temperature, double alpha,
                   double beta) {
  Tape tape;
  return kd_loss(tape.constant(student_logits), teacher_logits, labels, temperature, alpha, beta)
      .report;
}

double multi_temp_kld(const Matrix& student_logits, const Matrix& teacher_logits,
                      std::span<const double> temperatures) {
  Tape tape;
  return multi_temp_kld(tape.constant(student_logits), teacher_logits, temperatures).value()(0, 0);
}

LossReport normkd_loss(const Matrix& student_logits, const Matrix& teacher_logits, double t_norm,
                       double epsilon, StdKind kind) {
  Tape tape;
  return normkd_loss(tape.constant(student_logits), teacher_logits, t_norm, epsilon, {}, kind)
      .report;
}

LossReport distill_loss(const TemperatureRule& rule, const Matrix& student_logits,
                        const Matrix& teacher_logits, std::span<const std::size_t> labels,
                        double alpha, double beta, const DistillOptions& options) {
  Tape tape;
  return distill_loss(rule, tape.constant(student_logits), teacher_logits, labels, alpha, beta,
                      options)
      .report;
}

}  // namespace normkd

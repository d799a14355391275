#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "normkd/logitstats.hpp"
#include "normkd/numcore/matrix.hpp"
#include "normkd/numcore/ops.hpp"
#include "normkd/numcore/tape.hpp"

namespace normkd {

/// Probability vector on the class simplex.
class SoftDistribution {
 public:
  /// Validates entries in [0, 1] summing to 1 within 1e-12.
  static SoftDistribution from_probs(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  explicit SoftDistribution(std::vector<double> probs) : probs_(std::move(probs)) {}
  friend SoftDistribution soften(std::span<const double>, double);
  friend SoftDistribution multi_temp_prediction(std::span<const double>, std::span<const double>);

  std::vector<double> probs_;
};

/// softmax(logits / temperature), max-subtracted.
SoftDistribution soften(std::span<const double> logits, double temperature);
/// soften(logits, max(sigma(logits), epsilon) * t_norm).
SoftDistribution norm_soften(std::span<const double> logits, double t_norm,
                             double epsilon = kDefaultEpsilon, StdKind kind = StdKind::kCorrected);
/// Arithmetic mean of soften(logits, t) over the temperature set.
SoftDistribution multi_temp_prediction(std::span<const double> logits,
                                       std::span<const double> temperatures);
/// KL(teacher || student) with 0 ln 0 = 0. NumericError when the student has
/// a zero where the teacher has mass.
double kl_divergence(const SoftDistribution& teacher, const SoftDistribution& student);

/// Decomposed loss value. total = alpha * ce_part + beta * kld_part.
struct LossReport {
  double total = 0.0;
  double ce_part = 0.0;
  double kld_part = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  /// Squared teacher-side temperature per sample.
  std::vector<double> per_sample_weight;
  std::size_t batch_size = 0;
};

/// Graph handles for a loss plus its evaluated report.
struct LossTerms {
  Var total;
  Var ce;
  Var kld;
  LossReport report;
};

struct DistillOptions {
  /// Treat the student's per-sample temperature as a constant (ablation).
  bool detach_student_scale = false;
};

// Graph builders. The student logits are a node on some tape; teacher logits
// are plain values and never receive gradient. Every KL term is
// KL(teacher || student), summed over classes and averaged over samples.

/// Mean cross-entropy at T = 1.
Var cross_entropy(Var student_logits, std::span<const std::size_t> labels);

/// alpha * CE + beta * T^2 * mean_n KL(p_t(T) || p_s(T)).
LossTerms kd_loss(Var student_logits, const Matrix& teacher_logits,
                  std::span<const std::size_t> labels, double temperature, double alpha,
                  double beta);

/// T_mul^2 * mean_n KL(pbar_t || pbar_s) with T_mul = max(temperatures).
Var multi_temp_kld(Var student_logits, const Matrix& teacher_logits,
                   std::span<const double> temperatures);

/// mean_n (T_norm sigma_t,n)^2 * KL(p~_t,n || p~_s,n). The report carries
/// only KLD fields (alpha = 0, beta = 1).
LossTerms normkd_loss(Var student_logits, const Matrix& teacher_logits, double t_norm,
                      double epsilon = kDefaultEpsilon, const DistillOptions& options = {},
                      StdKind kind = StdKind::kCorrected);

/// Dispatches on the rule; Fixed is exactly kd_loss.
LossTerms distill_loss(const TemperatureRule& rule, Var student_logits,
                       const Matrix& teacher_logits, std::span<const std::size_t> labels,
                       double alpha, double beta, const DistillOptions& options = {});

struct WeightedTerm {
  double weight;
  Var term;
};

/// Weighted sum of same-shaped loss terms, e.g. NormKD stacked on an external
/// logit loss.
Var combine(std::span<const WeightedTerm> terms);

// Value-only conveniences that build a throwaway tape.
LossReport kd_loss(const Matrix& student_logits, const Matrix& teacher_logits,
                   std::span<const std::size_t> labels, double temperature, double alpha,
                   double beta);
double multi_temp_kld(const Matrix& student_logits, const Matrix& teacher_logits,
                      std::span<const double> temperatures);
LossReport normkd_loss(const Matrix& student_logits, const Matrix& teacher_logits, double t_norm,
                       double epsilon = kDefaultEpsilon, StdKind kind = StdKind::kCorrected);
LossReport distill_loss(const TemperatureRule& rule, const Matrix& student_logits,
                        const Matrix& teacher_logits, std::span<const std::size_t> labels,
                        double alpha, double beta, const DistillOptions& options = {});

}  // namespace normkd

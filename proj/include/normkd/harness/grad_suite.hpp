#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace normkd::harness {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteOptions {
  std::size_t instances = 100;
  std::uint64_t seed = 0;
  std::size_t rows = 3;
  std::size_t classes = 5;
  double step = 1e-5;
  /// Test hook: negates every analytic gradient so the checker must fail.
  bool inject_fault = false;
};

struct GradSuiteRow {
  std::string loss;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  bool pass = false;
};

struct GradSuiteReport {
  std::vector<GradSuiteRow> rows;
  bool all_pass() const noexcept;
};

/// Central finite-difference check of every distillation loss with respect to
/// the student logits. Instances keep the student row max at least 0.5 and
/// the extremal entries separated, so MaxVal/Range stay away from their kinks.
GradSuiteReport run_grad_suite(const GradSuiteOptions& options = {});

/// columns: loss,instances,max_rel_error,status
std::string grad_suite_csv(const GradSuiteReport& report);

}  // namespace normkd::harness

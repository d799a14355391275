#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "normkd/logitstats.hpp"
#include "normkd/numcore/matrix.hpp"

namespace normkd::harness {

/// Student-vs-teacher comparison over a shared set of samples.
///
/// The class-gap matrices are a small analogue of a logit correlation-matrix
/// comparison: gap[c1][c2] = |mean over samples labelled c1 of
/// (p_student[c2] - p_teacher[c2])|, with p the T = 1 softmax ("raw") or the
/// NormStd-softened distribution ("normalized"). Classes with no samples
/// leave a zero row.
struct Analysis {
  LogitSummary teacher;
  LogitSummary student;
  Matrix raw_gap;
  Matrix normalized_gap;
  double raw_frobenius = 0.0;
  double normalized_frobenius = 0.0;
};

/// ContractError unless both caches share N, C, sample ids and labels.
Analysis analyze(std::span<const LogitRecord> teacher, std::span<const LogitRecord> student,
                 double t_norm = 2.0, double epsilon = kDefaultEpsilon);

double frobenius_norm(const Matrix& m);

/// columns: model,sample_id,label,sigma,v_max,v_min,entropy
std::string per_sample_csv(const Analysis& a, std::span<const LogitRecord> teacher);
/// columns: prob_gap_analogue,class,p0..p{C-1}; variants "raw" and "normalized"
std::string gap_matrix_csv(const Analysis& a);
/// columns: model,bin,lo,hi,count
std::string sigma_histogram_csv(const Analysis& a);

/// Writes analysis_summary.csv, analysis_matrix.csv, sigma_histogram.csv.
void write_analysis(const Analysis& a, std::span<const LogitRecord> teacher,
                    const std::filesystem::path& out_dir);

}  // namespace normkd::harness

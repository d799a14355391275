#include "normkd/harness/analyze.hpp"

#include <cmath>

#include "normkd/distill.hpp"
#include "normkd/error.hpp"
#include "normkd/harness/files.hpp"

namespace normkd::harness {
namespace {

template <typename Soften>
Matrix class_gap(std::span<const LogitRecord> teacher, std::span<const LogitRecord> student,
                 std::size_t classes, Soften soften_fn) {
  Matrix sum(classes, classes);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const std::size_t label = teacher[i].label;
    const SoftDistribution pt = soften_fn(teacher[i].logits);
    const SoftDistribution ps = soften_fn(student[i].logits);
    for (std::size_t c = 0; c < classes; ++c) sum(label, c) += ps[c] - pt[c];
    ++counts[label];
  }
  for (std::size_t r = 0; r < classes; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      sum(r, c) = counts[r] == 0 ? 0.0 : std::abs(sum(r, c) / static_cast<double>(counts[r]));
    }
  }
  return sum;
}

}  // namespace

double frobenius_norm(const Matrix& m) {
  double ss = 0.0;
  for (double v : m.data()) ss += v * v;
  return std::sqrt(ss);
}

Analysis analyze(std::span<const LogitRecord> teacher, std::span<const LogitRecord> student,
                 double t_norm, double epsilon) {
  if (teacher.size() != student.size()) {
    throw ContractError("analyze: teacher cache has " + std::to_string(teacher.size()) +
                        " records, student cache has " + std::to_string(student.size()));
  }
  if (teacher.empty()) throw ContractError("analyze: empty caches");
  const std::size_t classes = teacher.front().logits.size();
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].sample_id != student[i].sample_id || teacher[i].label != student[i].label ||
        teacher[i].logits.size() != classes || student[i].logits.size() != classes) {
      throw ContractError("analyze: caches disagree at record " + std::to_string(i));
    }
    if (teacher[i].label >= classes) throw ContractError("analyze: label out of range");
  }
  const TemperatureRule rule = TemperatureRule::norm_std(t_norm, epsilon);
  Analysis a;
  a.teacher = summarize(teacher);
  a.student = summarize(student);
  a.raw_gap = class_gap(teacher, student, classes,
                        [](const std::vector<double>& z) { return soften(z, 1.0); });
  a.normalized_gap = class_gap(teacher, student, classes, [&](const std::vector<double>& z) {
    return soften(z, temperature_for(rule, z));
  });
  a.raw_frobenius = frobenius_norm(a.raw_gap);
  a.normalized_frobenius = frobenius_norm(a.normalized_gap);
  return a;
}

std::string per_sample_csv(const Analysis& a, std::span<const LogitRecord> teacher) {
  CsvWriter csv({"model", "sample_id", "label", "sigma", "v_max", "v_min", "entropy"});
  auto emit = [&](const char* model, const LogitSummary& s) {
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      const SampleStats& st = s.samples[i];
      csv.add_row({model, std::to_string(st.sample_id), std::to_string(teacher[i].label),
                   format_double(st.sigma), format_double(st.v_max), format_double(st.v_min),
                   format_double(st.entropy)});
    }
  };
  emit("teacher", a.teacher);
  emit("student", a.student);
  return csv.str();
}

std::string gap_matrix_csv(const Analysis& a) {
  const std::size_t classes = a.raw_gap.rows();
  std::vector<std::string> header{"prob_gap_analogue", "class"};
  for (std::size_t c = 0; c < classes; ++c) header.push_back("p" + std::to_string(c));
  CsvWriter csv(std::move(header));
  auto emit = [&](const char* variant, const Matrix& m) {
    for (std::size_t r = 0; r < classes; ++r) {
      std::vector<std::string> row{variant, std::to_string(r)};
      for (double v : m.row(r)) row.push_back(format_double(v));
      csv.add_row(std::move(row));
    }
  };
  emit("raw", a.raw_gap);
  emit("normalized", a.normalized_gap);
  return csv.str();
}

std::string sigma_histogram_csv(const Analysis& a) {
  CsvWriter csv({"model", "bin", "lo", "hi", "count"});
  auto emit = [&](const char* model, const Histogram& h) {
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      csv.add_row({model, std::to_string(b), format_double(h.lo + width * b),
                   format_double(h.lo + width * (b + 1)), std::to_string(h.counts[b])});
    }
  };
  emit("teacher", a.teacher.sigma_histogram);
  emit("student", a.student.sigma_histogram);
  return csv.str();
}

void write_analysis(const Analysis& a, std::span<const LogitRecord> teacher,
                    const std::filesystem::path& out_dir) {
  write_file_atomic(out_dir / "analysis_summary.csv", per_sample_csv(a, teacher));
  write_file_atomic(out_dir / "analysis_matrix.csv", gap_matrix_csv(a));
  write_file_atomic(out_dir / "sigma_histogram.csv", sigma_histogram_csv(a));
}

}  // namespace normkd::harness

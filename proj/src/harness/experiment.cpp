#include "normkd/harness/experiment.hpp"

#include <cmath>

#include "normkd/error.hpp"
#include "normkd/harness/files.hpp"
#include "normkd/random.hpp"

namespace normkd::harness {
namespace fs = std::filesystem;

fs::path seed_dir(const fs::path& root, std::uint64_t seed) {
  return root / ("seed_" + std::to_string(seed));
}

std::uint64_t derive_seed(std::uint64_t seed, SeedRole role) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(role)));
}

TeacherCache train_and_cache_teacher(const std::vector<std::size_t>& widths,
                                     const TrainConfig& config, std::uint64_t seed,
                                     const Dataset& train_set, const Dataset& val_set,
                                     const fs::path& dir) {
  TrainConfig tc = config;
  tc.seed = derive_seed(seed, SeedRole::kTeacherShuffle);
  const MlpSpec spec{widths, derive_seed(seed, SeedRole::kTeacherInit)};
  const TrainResult trained = train(spec, tc, train_set, val_set);
  TeacherCache cache;
  cache.train = quantize_to_cache_precision(cache_teacher_logits(trained.params, train_set));
  cache.val = quantize_to_cache_precision(cache_teacher_logits(trained.params, val_set));
  write_logit_cache(dir / "teacher_train.nkdl", cache.train);
  write_logit_cache(dir / "teacher_val.nkdl", cache.val);
  write_file_atomic(dir / "teacher_history.csv", history_csv(trained.history));
  return cache;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  const Dataset train_set = read_dataset(config.train_data);
  const Dataset val_set = read_dataset(config.val_data);
  if (train_set.classes != val_set.classes || train_set.dim() != val_set.dim()) {
    throw ContractError("train and val datasets disagree on C or D");
  }

  ExperimentOutcome outcome;
  for (std::uint64_t seed : config.seeds) {
    const fs::path dir = seed_dir(config.output_dir, seed);
    std::optional<TeacherCache> teacher;
    if (config.rule) {
      TeacherCache cache;
      if (config.teacher_dir) {
        const fs::path from = seed_dir(*config.teacher_dir, seed);
        cache.train = read_logit_cache(from / "teacher_train.nkdl");
        cache.val = read_logit_cache(from / "teacher_val.nkdl");
      } else {
        cache = train_and_cache_teacher(config.teacher_widths, config.teacher, seed, train_set,
                                        val_set, dir);
      }
      teacher = std::move(cache);
    }

    TrainConfig sc = config.student;
    sc.seed = derive_seed(seed, SeedRole::kStudentShuffle);
    const MlpSpec spec{config.student_widths, derive_seed(seed, SeedRole::kStudentInit)};
    const TrainResult student = teacher ? train(spec, sc, train_set, val_set, *teacher)
                                        : train(spec, sc, train_set, val_set);
    write_file_atomic(dir / "student_history.csv", history_csv(student.history));
    write_logit_cache(dir / "student_val.nkdl", cache_teacher_logits(student.params, val_set));
    outcome.runs.push_back({seed, evaluate(student.params, val_set)});
  }

  double sum = 0.0;
  for (const SeedOutcome& r : outcome.runs) sum += r.student_top1;
  const double n = static_cast<double>(outcome.runs.size());
  outcome.mean_top1 = sum / n;
  if (outcome.runs.size() > 1) {
    double ss = 0.0;
    for (const SeedOutcome& r : outcome.runs) {
      ss += (r.student_top1 - outcome.mean_top1) * (r.student_top1 - outcome.mean_top1);
    }
    outcome.std_top1 = std::sqrt(ss / (n - 1.0));
  }
  write_file_atomic(config.output_dir / "summary.csv", summary_csv(config, outcome));
  return outcome;
}

std::string summary_csv(const ExperimentConfig& config, const ExperimentOutcome& outcome) {
  CsvWriter csv({"seed", "rule", "params", "top1"});
  for (const SeedOutcome& r : outcome.runs) {
    csv.add_row({std::to_string(r.seed), config.rule_name(), config.rule_params(),
                 format_double(r.student_top1)});
  }
  csv.add_row({"mean", config.rule_name(), config.rule_params(), format_double(outcome.mean_top1)});
  csv.add_row({"std", config.rule_name(), config.rule_params(), format_double(outcome.std_top1)});
  return csv.str();
}

}  // namespace normkd::harness

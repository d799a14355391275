#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "normkd/harness/config.hpp"

namespace normkd::harness {

struct SeedOutcome {
  std::uint64_t seed = 0;
  double student_top1 = 0.0;  // final-epoch validation accuracy
};

struct ExperimentOutcome {
  std::vector<SeedOutcome> runs;
  double mean_top1 = 0.0;
  double std_top1 = 0.0;  // Bessel-corrected across seeds; 0 for one seed
};

/// Per seed: obtains teacher logits (trained here or read from teacher_dir),
/// trains the student under the configured rule and writes
///   <output_dir>/seed_<S>/{teacher_train,teacher_val}.nkdl   (when trained)
///   <output_dir>/seed_<S>/teacher_history.csv                 (when trained)
///   <output_dir>/seed_<S>/student_history.csv
///   <output_dir>/seed_<S>/student_val.nkdl
/// then <output_dir>/summary.csv with one row per seed plus "mean" and "std"
/// rows. Teacher logits always pass through cache precision before use.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

/// Trains a plain-CE teacher for `seed` and writes teacher_train.nkdl,
/// teacher_val.nkdl and teacher_history.csv into `dir`. The returned logits
/// are at cache precision.
TeacherCache train_and_cache_teacher(const std::vector<std::size_t>& widths,
                                     const TrainConfig& config, std::uint64_t seed,
                                     const Dataset& train_set, const Dataset& val_set,
                                     const std::filesystem::path& dir);

/// summary columns: seed,rule,params,top1
std::string summary_csv(const ExperimentConfig& config, const ExperimentOutcome& outcome);

std::filesystem::path seed_dir(const std::filesystem::path& root, std::uint64_t seed);

enum class SeedRole : std::uint64_t { kTeacherInit = 1, kTeacherShuffle, kStudentInit, kStudentShuffle };
/// Independent sub-seed for one role within a run.
std::uint64_t derive_seed(std::uint64_t seed, SeedRole role);

}  // namespace normkd::harness

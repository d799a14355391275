#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "normkd/logitstats.hpp"
#include "normkd/trainer.hpp"

namespace normkd::harness {

/// One distillation experiment, read from flat `key = value` text with '#'
/// comments. Relative paths resolve against the config file's directory.
struct ExperimentConfig {
  std::filesystem::path train_data;
  std::filesystem::path val_data;
  std::filesystem::path output_dir;
  /// Prior run directory holding seed_<S>/teacher_{train,val}.nkdl; when
  /// empty a teacher is trained per seed from teacher_widths.
  std::optional<std::filesystem::path> teacher_dir;
  std::vector<std::size_t> teacher_widths;
  std::vector<std::size_t> student_widths;
  TrainConfig teacher;  // alpha/beta/rule unused
  TrainConfig student;
  /// No value means the no-distillation baseline (rule = none).
  std::optional<TemperatureRule> rule;
  std::vector<std::uint64_t> seeds;

  std::string rule_name() const { return rule ? rule->name() : "none"; }
  std::string rule_params() const { return rule ? rule->params() : ""; }
};

/// Throws ConfigError on unknown or duplicate keys, missing required keys,
/// or unparsable values.
ExperimentConfig parse_config(std::string_view text,
                              const std::filesystem::path& base_dir = {});
/// parse_config on a file (IoError if unreadable) followed by
/// apply_env_overrides.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Comma-separated unsigned integers, e.g. "1,2,3".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// NORMKD_SEED, when set, replaces the seed list.
void apply_env_overrides(ExperimentConfig& config);

}  // namespace normkd::harness

#include "normkd/harness/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "normkd/error.hpp"
#include "normkd/harness/files.hpp"

namespace normkd::harness {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
  T out{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) +
                      "'");
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  for (std::string_view item : split_list(text)) out.push_back(parse_value<T>(key, item));
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false");
}

const std::set<std::string, std::less<>> kKnownKeys = {
    "train_data", "val_data", "output_dir", "teacher_dir", "teacher_widths", "student_widths",
    "teacher_epochs", "teacher_learning_rate", "teacher_lr_decay_epochs", "epochs", "batch_size",
    "learning_rate", "momentum", "weight_decay", "lr_decay_epochs", "lr_decay_rate", "alpha",
    "beta", "rule", "temperature", "temperatures", "t_norm", "t_v", "epsilon", "std",
    "detach_student_std", "seeds"};

const std::set<std::string, std::less<>> kRequiredKeys = {
    "train_data", "val_data", "output_dir", "student_widths", "rule", "seeds"};

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  auto seeds = parse_list<std::uint64_t>("seeds", text);
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? end : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!kKnownKeys.contains(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  for (const auto& key : kRequiredKeys) {
    if (!kv.contains(key)) throw ConfigError("config is missing required key '" + key + "'");
  }
  auto has = [&](std::string_view key) { return kv.contains(key); };
  auto get = [&](std::string_view key) -> std::string_view { return kv.find(key)->second; };
  auto path_of = [&](std::string_view key) {
    fs::path p(std::string(get(key)));
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  ExperimentConfig c;
  c.train_data = path_of("train_data");
  c.val_data = path_of("val_data");
  c.output_dir = path_of("output_dir");
  if (has("teacher_dir")) c.teacher_dir = path_of("teacher_dir");
  c.student_widths = parse_list<std::size_t>("student_widths", get("student_widths"));
  if (has("teacher_widths")) {
    c.teacher_widths = parse_list<std::size_t>("teacher_widths", get("teacher_widths"));
  }
  if (!c.teacher_dir && c.teacher_widths.empty() && get("rule") != "none") {
    throw ConfigError("config needs teacher_widths or teacher_dir to distill");
  }
  c.seeds = parse_seed_list(get("seeds"));

  TrainConfig& s = c.student;
  if (has("epochs")) {
    s.epochs = parse_value<std::size_t>("epochs", get("epochs"));
    s.lr_decay_epochs = scaled_decay_epochs(s.epochs);
  }
  if (has("batch_size")) s.batch_size = parse_value<std::size_t>("batch_size", get("batch_size"));
  if (has("learning_rate")) s.learning_rate = parse_value<double>("learning_rate", get("learning_rate"));
  if (has("momentum")) s.momentum = parse_value<double>("momentum", get("momentum"));
  if (has("weight_decay")) s.weight_decay = parse_value<double>("weight_decay", get("weight_decay"));
  if (has("lr_decay_epochs")) {
    s.lr_decay_epochs = parse_list<std::size_t>("lr_decay_epochs", get("lr_decay_epochs"));
  }
  if (has("lr_decay_rate")) s.lr_decay_rate = parse_value<double>("lr_decay_rate", get("lr_decay_rate"));
  if (has("alpha")) s.alpha = parse_value<double>("alpha", get("alpha"));
  if (has("beta")) s.beta = parse_value<double>("beta", get("beta"));
  if (has("detach_student_std")) {
    s.distill.detach_student_scale = parse_bool("detach_student_std", get("detach_student_std"));
  }

  c.teacher = s;
  if (has("teacher_epochs")) {
    c.teacher.epochs = parse_value<std::size_t>("teacher_epochs", get("teacher_epochs"));
    c.teacher.lr_decay_epochs = scaled_decay_epochs(c.teacher.epochs);
  }
  if (has("teacher_learning_rate")) {
    c.teacher.learning_rate = parse_value<double>("teacher_learning_rate", get("teacher_learning_rate"));
  }
  if (has("teacher_lr_decay_epochs")) {
    c.teacher.lr_decay_epochs =
        parse_list<std::size_t>("teacher_lr_decay_epochs", get("teacher_lr_decay_epochs"));
  }
  c.teacher.alpha = 1.0;
  c.teacher.beta = 0.0;

  const double epsilon = has("epsilon") ? parse_value<double>("epsilon", get("epsilon")) : kDefaultEpsilon;
  StdKind kind = StdKind::kCorrected;
  if (has("std")) {
    if (get("std") == "population") {
      kind = StdKind::kPopulation;
    } else if (get("std") != "corrected") {
      throw ConfigError("config key 'std': expected corrected or population");
    }
  }
  const std::string_view rule = get("rule");
  try {
    if (rule == "none") {
      c.rule.reset();
    } else if (rule == "fixed") {
      c.rule = TemperatureRule::fixed(has("temperature") ? parse_value<double>("temperature", get("temperature")) : 4.0);
    } else if (rule == "multi") {
      if (!has("temperatures")) throw ConfigError("rule = multi needs temperatures");
      c.rule = TemperatureRule::multi_set(parse_list<double>("temperatures", get("temperatures")));
    } else if (rule == "norm") {
      c.rule = TemperatureRule::norm_std(has("t_norm") ? parse_value<double>("t_norm", get("t_norm")) : 2.0, epsilon, kind);
    } else if (rule == "maxval") {
      c.rule = TemperatureRule::max_val(has("t_v") ? parse_value<double>("t_v", get("t_v")) : 1.0, epsilon);
    } else if (rule == "range") {
      c.rule = TemperatureRule::range(has("t_v") ? parse_value<double>("t_v", get("t_v")) : 1.0, epsilon);
    } else {
      throw ConfigError("unknown rule '" + std::string(rule) +
                        "' (expected none, fixed, multi, norm, maxval, range)");
    }
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid rule parameters: ") + e.what());
  }
  if (c.rule) s.rule = *c.rule;
  s.validate();
  c.teacher.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  ExperimentConfig c = parse_config(read_file(path), path.parent_path());
  apply_env_overrides(c);
  return c;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* env = std::getenv("NORMKD_SEED"); env != nullptr && *env != '\0') {
    config.seeds = parse_seed_list(env);
  }
}

}  // namespace normkd::harness

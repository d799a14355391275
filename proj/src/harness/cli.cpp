#include "normkd/harness/cli.hpp"

#include <CLI11.hpp>

#include "normkd/error.hpp"
#include "normkd/harness/analyze.hpp"
#include "normkd/harness/config.hpp"
#include "normkd/harness/datagen.hpp"
#include "normkd/harness/experiment.hpp"
#include "normkd/harness/files.hpp"
#include "normkd/harness/grad_suite.hpp"

namespace normkd::harness {
namespace fs = std::filesystem;
namespace {

struct GenDataArgs {
  BlobSpec spec;
  std::string out_dir;
};

struct TrainTeacherArgs {
  std::string train;
  std::string val;
  std::vector<std::size_t> widths;
  std::size_t epochs = 120;
  std::size_t batch_size = 64;
  double lr = 0.05;
  std::uint64_t seed = 0;
  std::string out_dir;
};

struct AnalyzeArgs {
  std::string teacher;
  std::string student;
  std::string out_dir;
  double t_norm = 2.0;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  const DataSplits splits = generate_blobs(a.spec);
  write_dataset(fs::path(a.out_dir) / "train.txt", splits.train);
  write_dataset(fs::path(a.out_dir) / "val.txt", splits.val);
  out << "train " << splits.train.size() << " val " << splits.val.size() << '\n';
  return 0;
}

int train_teacher(const TrainTeacherArgs& a, std::ostream& out) {
  const Dataset train_set = read_dataset(a.train);
  const Dataset val_set = read_dataset(a.val);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.lr_decay_epochs = scaled_decay_epochs(a.epochs);
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.alpha = 1.0;
  tc.beta = 0.0;
  tc.validate();
  const fs::path dir = seed_dir(a.out_dir, a.seed);
  const TeacherCache cache = train_and_cache_teacher(a.widths, tc, a.seed, train_set, val_set, dir);
  out << "teacher val top1 " << format_double(top1_accuracy(logits_matrix(cache.val), [&] {
    std::vector<std::size_t> labels;
    for (const LogitRecord& r : cache.val) labels.push_back(r.label);
    return labels;
  }())) << " -> " << dir.string() << '\n';
  return 0;
}

int distill(const std::string& config_path, std::ostream& out) {
  const ExperimentConfig config = load_config(config_path);
  const ExperimentOutcome outcome = run_experiment(config);
  out << summary_csv(config, outcome);
  return 0;
}

int eval(const std::string& cache_path, std::ostream& out) {
  const std::vector<LogitRecord> records = read_logit_cache(cache_path);
  std::vector<std::size_t> labels;
  for (const LogitRecord& r : records) labels.push_back(r.label);
  const double top1 = records.empty() ? 0.0 : top1_accuracy(logits_matrix(records), labels);
  CsvWriter csv({"cache", "n", "classes", "top1"});
  csv.add_row({cache_path, std::to_string(records.size()),
               std::to_string(records.empty() ? 0 : records.front().logits.size()),
               format_double(top1)});
  out << csv.str();
  return 0;
}

int run_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const std::vector<LogitRecord> teacher = read_logit_cache(a.teacher);
  const std::vector<LogitRecord> student = read_logit_cache(a.student);
  const Analysis analysis = analyze(teacher, student, a.t_norm);
  write_analysis(analysis, teacher, a.out_dir);
  out << "raw_frobenius " << format_double(analysis.raw_frobenius) << '\n'
      << "normalized_frobenius " << format_double(analysis.normalized_frobenius) << '\n';
  return 0;
}

int grad_check(const GradSuiteOptions& options, std::ostream& out) {
  const GradSuiteReport report = run_grad_suite(options);
  out << grad_suite_csv(report);
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NormKD desk-scale distillation toolkit", "normkd"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate Gaussian blob train/val files");
  gen_cmd->add_option("--classes", gen.spec.classes)->capture_default_str();
  gen_cmd->add_option("--dim", gen.spec.dim)->capture_default_str();
  gen_cmd->add_option("--per-class", gen.spec.per_class)->capture_default_str();
  gen_cmd->add_option("--margin", gen.spec.margin)->capture_default_str();
  gen_cmd->add_option("--seed", gen.spec.seed)->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir)->required();

  TrainTeacherArgs tt;
  auto* tt_cmd = app.add_subcommand("train-teacher", "Train a teacher and cache its logits");
  tt_cmd->add_option("--train", tt.train)->required();
  tt_cmd->add_option("--val", tt.val)->required();
  tt_cmd->add_option("--widths", tt.widths)->required()->delimiter(',');
  tt_cmd->add_option("--epochs", tt.epochs)->capture_default_str();
  tt_cmd->add_option("--batch-size", tt.batch_size)->capture_default_str();
  tt_cmd->add_option("--lr", tt.lr)->capture_default_str();
  tt_cmd->add_option("--seed", tt.seed)->capture_default_str();
  tt_cmd->add_option("--out-dir", tt.out_dir)->required();

  std::string config_path;
  auto* distill_cmd = app.add_subcommand("distill", "Run an experiment config across its seeds");
  distill_cmd->add_option("--config", config_path)->required();

  std::string cache_path;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a logit cache");
  eval_cmd->add_option("--cache", cache_path)->required();

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compare teacher and student logit caches");
  analyze_cmd->add_option("--teacher", an.teacher)->required();
  analyze_cmd->add_option("--student", an.student)->required();
  analyze_cmd->add_option("--out-dir", an.out_dir)->required();
  analyze_cmd->add_option("--t-norm", an.t_norm)->capture_default_str();

  GradSuiteOptions gs;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of every loss");
  gc_cmd->add_option("--instances", gs.instances)->capture_default_str();
  gc_cmd->add_option("--seed", gs.seed)->capture_default_str();
  gc_cmd->add_flag("--inject-fault", gs.inject_fault, "Negate analytic gradients (test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen_cmd) return gen_data(gen, out);
    if (*tt_cmd) return train_teacher(tt, out);
    if (*distill_cmd) return distill(config_path, out);
    if (*eval_cmd) return eval(cache_path, out);
    if (*analyze_cmd) return run_analyze(an, out);
    if (*gc_cmd) return grad_check(gs, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(ErrorKind::kContract);
  }
  return 1;
}

}  // namespace normkd::harness

#include "normkd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "normkd/error.hpp"
#include "normkd/numcore/ops.hpp"
#include "normkd/random.hpp"

namespace normkd {
namespace {

void check_teacher_split(std::span<const LogitRecord> records, const Dataset& data,
                         const char* split) {
  if (records.size() != data.size()) {
    throw ContractError(std::string("teacher cache for ") + split + " has " +
                        std::to_string(records.size()) + " records, dataset has " +
                        std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const LogitRecord& r = records[i];
    if (r.sample_id != i || r.label != data.labels[i] || r.logits.size() != data.classes) {
      throw ContractError(std::string("teacher cache record ") + std::to_string(i) + " (" + split +
                          ") does not match the dataset sample");
    }
  }
}

struct Batch {
  Matrix features;
  std::vector<std::size_t> labels;
};

struct SplitLoss {
  double ce = 0.0;
  double kld = 0.0;
  double total = 0.0;
};

// Mode of the objective, shared by the batch loop and the split evaluation.
struct Objective {
  const TrainConfig& config;
  const Matrix* teacher_train = nullptr;  // null: plain CE
  const Matrix* teacher_val = nullptr;

  bool distilling() const { return teacher_train != nullptr && config.beta != 0.0; }

  LossTerms build(Var logits, std::span<const std::size_t> labels, const Matrix* teacher) const {
    if (teacher != nullptr && config.beta != 0.0) {
      return distill_loss(config.rule, logits, *teacher, labels, config.alpha, config.beta,
                          config.distill);
    }
    const Var ce = cross_entropy(logits, labels);
    const double weight = teacher_train != nullptr ? config.alpha : 1.0;
    const Var total = teacher_train != nullptr ? scale(ce, weight) : ce;
    LossTerms terms{total, ce, Var{}, {}};
    terms.report.total = total.value()(0, 0);
    terms.report.ce_part = ce.value()(0, 0);
    terms.report.alpha = weight;
    terms.report.batch_size = labels.size();
    return terms;
  }
};

TrainResult run_training(const MlpSpec& spec, const TrainConfig& config, const Dataset& train_set,
                         const Dataset& val_set, const TeacherCache* teacher,
                         const StepObserver& observer) {
  config.validate();
  validate(train_set);
  validate(val_set);
  if (train_set.size() == 0) throw ContractError("training set is empty");
  if (spec.widths.size() < 2 || spec.widths.front() != train_set.dim() ||
      spec.widths.back() != train_set.classes) {
    throw ContractError("MLP widths do not match dataset dim/classes");
  }
  if (val_set.size() > 0 && (val_set.dim() != train_set.dim() || val_set.classes != train_set.classes)) {
    throw ContractError("validation split shape differs from training split");
  }

  std::optional<Matrix> teacher_train;
  std::optional<Matrix> teacher_val;
  if (teacher != nullptr) {
    check_teacher_split(teacher->train, train_set, "train");
    teacher_train = logits_matrix(teacher->train);
    if (!teacher->val.empty()) {
      check_teacher_split(teacher->val, val_set, "val");
      teacher_val = logits_matrix(teacher->val);
    }
  }
  const Objective objective{config, teacher_train ? &*teacher_train : nullptr,
                            teacher_val ? &*teacher_val : nullptr};

  TrainResult result{init_mlp(spec), {}};
  MlpParams& params = result.params;
  NesterovSgd optimizer(config.momentum, config.weight_decay);
  const std::size_t n = train_set.size();
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    const std::vector<std::size_t> order = epoch_order(config.seed, epoch, n);
    SplitLoss running;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      std::vector<std::size_t> labels;
      labels.reserve(batch.size());
      for (std::size_t i : batch) labels.push_back(train_set.labels[i]);

      Tape tape;
      std::vector<Var> vars;
      for (const DenseLayer& l : params.layers) {
        vars.push_back(tape.leaf(l.weight));
        vars.push_back(tape.leaf(l.bias));
      }
      const Var logits = forward(vars, tape.constant(gather_rows(train_set.features, batch)));
      std::optional<Matrix> teacher_batch;
      if (objective.distilling()) teacher_batch = gather_rows(*teacher_train, batch);
      const LossTerms terms =
          objective.build(logits, labels, teacher_batch ? &*teacher_batch : nullptr);
      const Gradients grads = tape.backward(terms.total);

      if (observer) observer(StepLog{epoch, global_step, batch, lr, params, terms.report});

      std::vector<Matrix> flat;
      flat.reserve(vars.size());
      for (const Var& v : vars) flat.push_back(grads[v]);
      optimizer.step(params, flat, lr);

      const double weight = static_cast<double>(batch.size());
      running.ce += terms.report.ce_part * weight;
      running.kld += terms.report.kld_part * weight;
      running.total += terms.report.total * weight;
      ++global_step;
    }
    const double count = static_cast<double>(n);
    result.history.push_back({epoch, Split::kTrain, running.ce / count, running.kld / count,
                              running.total / count, evaluate(params, train_set)});

    if (val_set.size() > 0) {
      Tape tape;
      const Var logits = tape.constant(forward(params, val_set.features));
      const Matrix* t = objective.distilling() ? objective.teacher_val : nullptr;
      const LossReport r = objective.build(logits, val_set.labels, t).report;
      result.history.push_back({epoch, Split::kVal, r.ce_part, r.kld_part, r.total,
                                top1_accuracy(logits.value(), val_set.labels)});
    }
  }
  return result;
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
  std::size_t count = 0;
  for (const DenseLayer& l : layers) count += l.weight.size() + l.bias.size();
  return count;
}

MlpParams init_mlp(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw ContractError("MLP needs at least input and output widths");
  for (std::size_t w : spec.widths) {
    if (w == 0) throw ContractError("MLP widths must be positive");
  }
  MlpParams params;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t fan_in = spec.widths[l];
    const std::size_t fan_out = spec.widths[l + 1];
    CounterStream stream(spec.seed, kStreamInit + 16 * (l + 1));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix weight(fan_in, fan_out);
    for (double& v : weight.data()) v = stream.uniform(-bound, bound);
    params.layers.push_back({std::move(weight), Matrix(1, fan_out)});
  }
  return params;
}

Matrix forward(const MlpParams& params, const Matrix& features) {
  Tape tape;
  std::vector<Var> vars;
  for (const DenseLayer& l : params.layers) {
    vars.push_back(tape.constant(l.weight));
    vars.push_back(tape.constant(l.bias));
  }
  return forward(vars, tape.constant(features)).value();
}

Var forward(std::span<const Var> params, Var input) {
  if (params.empty() || params.size() % 2 != 0) {
    throw ContractError("forward: expected (weight, bias) pairs");
  }
  Var h = input;
  for (std::size_t l = 0; l < params.size(); l += 2) {
    h = affine(h, params[l], params[l + 1]);
    if (l + 2 < params.size()) h = relu(h);
  }
  return h;
}

void validate(const Dataset& data) {
  if (data.features.rows() != data.labels.size()) {
    throw ContractError("dataset has " + std::to_string(data.features.rows()) +
                        " feature rows but " + std::to_string(data.labels.size()) + " labels");
  }
  for (std::size_t y : data.labels) {
    if (y >= data.classes) {
      throw ContractError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(data.classes) + ")");
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_decay_rate > 0.0)) throw ConfigError("lr_decay_rate must be positive");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
      throw ConfigError("lr_decay_epochs must be strictly increasing");
    }
    if (lr_decay_epochs[i] >= epochs) throw ConfigError("lr_decay_epochs must be < epochs");
  }
}

std::vector<std::size_t> scaled_decay_epochs(std::size_t epochs) {
  std::vector<std::size_t> out;
  for (std::size_t eighths : {5, 6, 7}) {
    const std::size_t d = epochs * eighths / 8;
    if (d > 0 && (out.empty() || d > out.back())) out.push_back(d);
  }
  return out;
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  double lr = config.learning_rate;
  for (std::size_t d : config.lr_decay_epochs) {
    if (d <= epoch) lr *= config.lr_decay_rate;
  }
  return lr;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterStream stream(seed, kStreamShuffle + 16 * (epoch + 1));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[stream.below(i)]);
  }
  return order;
}

const char* split_name(Split split) { return split == Split::kTrain ? "train" : "val"; }

void NesterovSgd::step(MlpParams& params, std::span<const Matrix> grads, double learning_rate) {
  if (grads.size() != 2 * params.layers.size()) {
    throw ContractError("optimizer: gradient count does not match parameters");
  }
  if (velocity_.empty()) {
    for (const DenseLayer& l : params.layers) {
      velocity_.emplace_back(l.weight.rows(), l.weight.cols());
      velocity_.emplace_back(l.bias.rows(), l.bias.cols());
    }
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    DenseLayer& layer = params.layers[k / 2];
    Matrix& p = k % 2 == 0 ? layer.weight : layer.bias;
    Matrix& v = velocity_[k];
    const Matrix& g = grads[k];
    if (!g.same_shape(p)) {
      throw DimensionError("optimizer: gradient " + g.shape_string() + " vs parameter " +
                           p.shape_string());
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i] + weight_decay_ * p.data()[i];
      v.data()[i] = momentum_ * v.data()[i] + gi;
      p.data()[i] -= learning_rate * (gi + momentum_ * v.data()[i]);
    }
  }
}

TrainResult train(const MlpSpec& spec, const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set, const StepObserver& observer) {
  return run_training(spec, config, train_set, val_set, nullptr, observer);
}

TrainResult train(const MlpSpec& spec, const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set, const TeacherCache& teacher,
                  const StepObserver& observer) {
  return run_training(spec, config, train_set, val_set, &teacher, observer);
}

double top1_accuracy(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("top1_accuracy: " + std::to_string(labels.size()) + " labels for " +
                         logits.shape_string() + " logits");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < logits.rows(); ++n) {
    const auto row = logits.row(n);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[n] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate(const MlpParams& params, const Dataset& data) {
  return top1_accuracy(forward(params, data.features), data.labels);
}

std::vector<LogitRecord> cache_teacher_logits(const MlpParams& params, const Dataset& data) {
  validate(data);
  const Matrix logits = forward(params, data.features);
  std::vector<LogitRecord> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = logits.row(i);
    out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(data.labels[i]),
                   std::vector<double>(row.begin(), row.end())});
  }
  return out;
}

Matrix logits_matrix(std::span<const LogitRecord> records) {
  if (records.empty()) return Matrix();
  const std::size_t c = records.front().logits.size();
  Matrix out(records.size(), c);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].logits.size() != c) {
      throw DimensionError("logit record " + std::to_string(i) + " has " +
                           std::to_string(records[i].logits.size()) + " classes, expected " +
                           std::to_string(c));
    }
    std::copy(records[i].logits.begin(), records[i].logits.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace normkd

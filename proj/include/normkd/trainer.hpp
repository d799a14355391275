#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "normkd/distill.hpp"
#include "normkd/logitstats.hpp"
#include "normkd/numcore/matrix.hpp"
#include "normkd/numcore/tape.hpp"

namespace normkd {

/// Fully connected ReLU network. widths = [input D, hidden..., classes C].
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::uint64_t seed = 0;
};

struct DenseLayer {
  Matrix weight;  // fan_in x fan_out
  Matrix bias;    // 1 x fan_out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t classes() const { return layers.back().weight.cols(); }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a counter stream keyed
/// on (seed, layer); biases zero.
MlpParams init_mlp(const MlpSpec& spec);

/// Raw logits for every row of `features`.
Matrix forward(const MlpParams& params, const Matrix& features);
/// Differentiable forward; `params` holds (weight, bias) node pairs per layer.
Var forward(std::span<const Var> params, Var input);

struct Dataset {
  std::size_t classes = 0;
  Matrix features;  // N x D
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

/// Throws ContractError unless labels are in range and shapes agree.
void validate(const Dataset& data);

struct TrainConfig {
  std::size_t epochs = 120;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 5e-4;
  std::vector<std::size_t> lr_decay_epochs{75, 90, 105};
  double lr_decay_rate = 0.1;
  double alpha = 0.1;
  double beta = 0.9;
  TemperatureRule rule = TemperatureRule::norm_std(2.0);
  DistillOptions distill;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an inconsistent recipe.
  void validate() const;
};

/// The default decay milestones (5/8, 3/4, 7/8 of training) rescaled to
/// `epochs`; zero and repeated milestones are dropped.
std::vector<std::size_t> scaled_decay_epochs(std::size_t epochs);

/// Learning rate in effect during `epoch` (0-based): the base rate times
/// decay_rate for every decay epoch <= epoch.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

/// Visiting order of `n` samples in `epoch`; a Fisher-Yates shuffle driven by
/// a counter stream keyed on (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

enum class Split { kTrain, kVal };
const char* split_name(Split split);

struct EpochRecord {
  std::size_t epoch = 0;
  Split split = Split::kTrain;
  double ce = 0.0;
  double kld = 0.0;
  double total = 0.0;
  double top1 = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

/// Precomputed raw teacher logits. `val` may be empty, in which case the
/// validation rows carry kld = 0.
struct TeacherCache {
  std::vector<LogitRecord> train;
  std::vector<LogitRecord> val;
};

struct StepLog {
  std::size_t epoch;
  std::size_t step;  // global, 0-based
  std::span<const std::size_t> batch;
  double learning_rate;
  const MlpParams& params_before;
  const LossReport& loss;
};

using StepObserver = std::function<void(const StepLog&)>;

struct TrainResult {
  MlpParams params;
  TrainHistory history;
};

/// SGD with Nesterov momentum and coupled L2 weight decay:
///   g = grad + wd * p;  v = mu * v + g;  p -= lr * (g + mu * v).
class NesterovSgd {
 public:
  NesterovSgd(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  /// `grads` lists (weight, bias) gradients per layer.
  void step(MlpParams& params, std::span<const Matrix> grads, double learning_rate);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix> velocity_;
};

/// Plain cross-entropy training (total = CE).
TrainResult train(const MlpSpec& spec, const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set, const StepObserver& observer = {});

/// Distillation: total = alpha * CE + beta * rule-dispatched KLD against the
/// cached teacher logits. With beta == 0 the KLD branch is never built.
TrainResult train(const MlpSpec& spec, const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set, const TeacherCache& teacher,
                  const StepObserver& observer = {});

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double top1_accuracy(const Matrix& logits, std::span<const std::size_t> labels);
double evaluate(const MlpParams& params, const Dataset& data);

/// One record per sample in dataset order; sample_id is the row index.
std::vector<LogitRecord> cache_teacher_logits(const MlpParams& params, const Dataset& data);
/// Stacks record logits into an N x C matrix.
Matrix logits_matrix(std::span<const LogitRecord> records);

}  // namespace normkd

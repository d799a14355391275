#include "normkd/harness/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "normkd/error.hpp"
#include "normkd/random.hpp"

namespace normkd::harness {
namespace {

constexpr double kMaxMargin = 1e6;
constexpr int kAttemptsPerCenter = 2000;
constexpr int kMaxGrowth = 40;

std::vector<std::vector<double>> place_centers(const BlobSpec& spec, CounterStream& stream) {
  double half_width =
      spec.margin * std::max(0.5, std::pow(static_cast<double>(spec.classes),
                                           1.0 / static_cast<double>(spec.dim)));
  for (int growth = 0; growth < kMaxGrowth; ++growth, half_width *= 1.25) {
    std::vector<std::vector<double>> centers;
    bool stuck = false;
    while (centers.size() < spec.classes && !stuck) {
      stuck = true;
      for (int attempt = 0; attempt < kAttemptsPerCenter; ++attempt) {
        std::vector<double> c(spec.dim);
        for (double& v : c) v = stream.uniform(-half_width, half_width);
        const bool clear = std::all_of(centers.begin(), centers.end(), [&](const auto& other) {
          double d2 = 0.0;
          for (std::size_t j = 0; j < spec.dim; ++j) d2 += (c[j] - other[j]) * (c[j] - other[j]);
          return d2 >= spec.margin * spec.margin;
        });
        if (clear) {
          centers.push_back(std::move(c));
          stuck = false;
          break;
        }
      }
    }
    if (!stuck) return centers;
  }
  throw ConfigError("cannot place " + std::to_string(spec.classes) + " centers " +
                    std::to_string(spec.margin) + " apart in " + std::to_string(spec.dim) +
                    " dimensions");
}

Dataset assemble(const std::vector<std::vector<double>>& rows,
                 const std::vector<std::size_t>& labels, std::size_t classes, std::size_t dim,
                 CounterStream& stream) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[stream.below(i)]);
  Dataset d;
  d.classes = classes;
  d.features = Matrix(rows.size(), dim);
  d.labels.resize(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy(rows[order[i]].begin(), rows[order[i]].end(), d.features.row(i).begin());
    d.labels[i] = labels[order[i]];
  }
  return d;
}

}  // namespace

DataSplits generate_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw ConfigError("need at least 2 classes");
  if (spec.per_class < 2) throw ConfigError("need at least 2 samples per class");
  if (spec.dim < 1) throw ConfigError("feature dimension must be positive");
  if (!(spec.margin > 0.0) || !std::isfinite(spec.margin) || spec.margin > kMaxMargin) {
    throw ConfigError("margin must lie in (0, 1e6]");
  }
  CounterStream stream(spec.seed, kStreamData);
  const auto centers = place_centers(spec, stream);

  const std::size_t n_train = spec.per_class * 4 / 5;
  std::vector<std::vector<double>> train_rows, val_rows;
  std::vector<std::size_t> train_labels, val_labels;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      std::vector<double> x(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = centers[k][j] + stream.normal();
      if (i < n_train) {
        train_rows.push_back(std::move(x));
        train_labels.push_back(k);
      } else {
        val_rows.push_back(std::move(x));
        val_labels.push_back(k);
      }
    }
  }
  DataSplits out;
  out.train = assemble(train_rows, train_labels, spec.classes, spec.dim, stream);
  out.val = assemble(val_rows, val_labels, spec.classes, spec.dim, stream);
  return out;
}

}  // namespace normkd::harness

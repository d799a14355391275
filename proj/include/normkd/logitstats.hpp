#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "normkd/numcore/ops.hpp"

namespace normkd {

/// One sample's raw class logits.
struct LogitRecord {
  std::uint32_t sample_id = 0;
  std::uint32_t label = 0;
  std::vector<double> logits;

  friend bool operator==(const LogitRecord&, const LogitRecord&) = default;
};

inline constexpr double kDefaultEpsilon = 1e-8;

/// Softening strategies. Construct through TemperatureRule's factories, which
/// validate positivity.
namespace rules {
struct Fixed {
  double temperature;
};
struct MultiSet {
  std::vector<double> temperatures;
};
/// Per-sample temperature max(sigma, epsilon) * t_norm.
struct NormStd {
  double t_norm;
  double epsilon = kDefaultEpsilon;
  StdKind std_kind = StdKind::kCorrected;
};
/// Per-sample temperature max(V_max, epsilon) * t_v. Not shift invariant.
struct MaxVal {
  double t_v;
  double epsilon = kDefaultEpsilon;
};
/// Per-sample temperature max(V_max - V_min, epsilon) * t_v.
struct Range {
  double t_v;
  double epsilon = kDefaultEpsilon;
};
}  // namespace rules

class TemperatureRule {
 public:
  using Variant = std::variant<rules::Fixed, rules::MultiSet, rules::NormStd, rules::MaxVal,
                               rules::Range>;

  static TemperatureRule fixed(double temperature);
  static TemperatureRule multi_set(std::vector<double> temperatures);
  static TemperatureRule norm_std(double t_norm, double epsilon = kDefaultEpsilon,
                                  StdKind kind = StdKind::kCorrected);
  static TemperatureRule max_val(double t_v, double epsilon = kDefaultEpsilon);
  static TemperatureRule range(double t_v, double epsilon = kDefaultEpsilon);

  const Variant& variant() const noexcept { return rule_; }
  /// True for the rules whose temperature depends on each sample's logits.
  bool per_sample() const noexcept;

  /// Short identifier: fixed, multi, norm, maxval, range.
  std::string name() const;
  /// Parameter description without commas, e.g. "T=4" or "temps=1|2|4".
  std::string params() const;

 private:
  explicit TemperatureRule(Variant rule) : rule_(std::move(rule)) {}
  Variant rule_;
};

/// Standard deviation of one logit vector. Requires at least 2 entries.
double sample_std(std::span<const double> logits, StdKind kind = StdKind::kCorrected);

/// The single temperature a rule assigns to `logits`. ContractError for MultiSet.
double temperature_for(const TemperatureRule& rule, std::span<const double> logits);
/// All temperatures a rule assigns to `logits` (one entry unless MultiSet).
std::vector<double> temperatures_for(const TemperatureRule& rule, std::span<const double> logits);

struct SampleStats {
  std::uint32_t sample_id = 0;
  double sigma = 0.0;
  double mean = 0.0;
  double v_max = 0.0;
  double v_min = 0.0;
  double entropy = 0.0;  // of softmax(logits) at T = 1, natural log
};

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

struct LogitSummary {
  std::vector<SampleStats> samples;
  Histogram sigma_histogram;
};

inline constexpr std::size_t kHistogramBins = 50;

SampleStats sample_stats(const LogitRecord& record, StdKind kind = StdKind::kCorrected);

/// Per-sample statistics plus a uniform-bin histogram of sigma over
/// [min sigma, max sigma]. When all sigmas coincide every count lands in bin 0.
LogitSummary summarize(std::span<const LogitRecord> records, std::size_t bins = kHistogramBins,
                       StdKind kind = StdKind::kCorrected);

}  // namespace normkd

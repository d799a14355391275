#include "normkd/logitstats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "normkd/error.hpp"

namespace normkd {
namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ContractError(std::string(what) + " must be finite and strictly positive");
  }
}

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void require_finite(std::span<const double> logits) {
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("logits contain a non-finite entry");
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

TemperatureRule TemperatureRule::fixed(double temperature) {
  require_positive(temperature, "temperature");
  return TemperatureRule(rules::Fixed{temperature});
}

TemperatureRule TemperatureRule::multi_set(std::vector<double> temperatures) {
  if (temperatures.empty()) throw ContractError("temperature set must be nonempty");
  for (double t : temperatures) require_positive(t, "temperature set member");
  return TemperatureRule(rules::MultiSet{std::move(temperatures)});
}

TemperatureRule TemperatureRule::norm_std(double t_norm, double epsilon, StdKind kind) {
  require_positive(t_norm, "T_norm");
  require_positive(epsilon, "epsilon");
  return TemperatureRule(rules::NormStd{t_norm, epsilon, kind});
}

TemperatureRule TemperatureRule::max_val(double t_v, double epsilon) {
  require_positive(t_v, "T_v");
  require_positive(epsilon, "epsilon");
  return TemperatureRule(rules::MaxVal{t_v, epsilon});
}

TemperatureRule TemperatureRule::range(double t_v, double epsilon) {
  require_positive(t_v, "T_v");
  require_positive(epsilon, "epsilon");
  return TemperatureRule(rules::Range{t_v, epsilon});
}

bool TemperatureRule::per_sample() const noexcept {
  return !std::holds_alternative<rules::Fixed>(rule_) &&
         !std::holds_alternative<rules::MultiSet>(rule_);
}

std::string TemperatureRule::name() const {
  return std::visit(Overloaded{[](const rules::Fixed&) { return std::string("fixed"); },
                               [](const rules::MultiSet&) { return std::string("multi"); },
                               [](const rules::NormStd&) { return std::string("norm"); },
                               [](const rules::MaxVal&) { return std::string("maxval"); },
                               [](const rules::Range&) { return std::string("range"); }},
                    rule_);
}

std::string TemperatureRule::params() const {
  return std::visit(
      Overloaded{[](const rules::Fixed& r) { return "T=" + shortest(r.temperature); },
                 [](const rules::MultiSet& r) {
                   std::string out = "temps=";
                   for (std::size_t i = 0; i < r.temperatures.size(); ++i) {
                     if (i > 0) out += '|';
                     out += shortest(r.temperatures[i]);
                   }
                   return out;
                 },
                 [](const rules::NormStd& r) {
                   return "T_norm=" + shortest(r.t_norm) + ";eps=" + shortest(r.epsilon) +
                          (r.std_kind == StdKind::kCorrected ? ";std=corrected"
                                                             : ";std=population");
                 },
                 [](const rules::MaxVal& r) {
                   return "T_v=" + shortest(r.t_v) + ";eps=" + shortest(r.epsilon);
                 },
                 [](const rules::Range& r) {
                   return "T_v=" + shortest(r.t_v) + ";eps=" + shortest(r.epsilon);
                 }},
      rule_);
}

double sample_std(std::span<const double> logits, StdKind kind) {
  const std::size_t c = logits.size();
  if (c < 2) throw ContractError("sample_std: need at least 2 logits, got " + std::to_string(c));
  double mean = 0.0;
  for (double v : logits) mean += v;
  mean /= static_cast<double>(c);
  double ss = 0.0;
  for (double v : logits) ss += (v - mean) * (v - mean);
  const double denom = static_cast<double>(kind == StdKind::kCorrected ? c - 1 : c);
  return std::sqrt(ss / denom);
}

std::vector<double> temperatures_for(const TemperatureRule& rule, std::span<const double> logits) {
  require_finite(logits);
  return std::visit(
      Overloaded{
          [](const rules::Fixed& r) { return std::vector<double>{r.temperature}; },
          [](const rules::MultiSet& r) { return r.temperatures; },
          [&](const rules::NormStd& r) {
            return std::vector<double>{std::max(sample_std(logits, r.std_kind), r.epsilon) *
                                       r.t_norm};
          },
          [&](const rules::MaxVal& r) {
            if (logits.empty()) throw ContractError("MaxVal rule on empty logits");
            const double vmax = *std::max_element(logits.begin(), logits.end());
            return std::vector<double>{std::max(vmax, r.epsilon) * r.t_v};
          },
          [&](const rules::Range& r) {
            if (logits.empty()) throw ContractError("Range rule on empty logits");
            const auto [lo, hi] = std::minmax_element(logits.begin(), logits.end());
            return std::vector<double>{std::max(*hi - *lo, r.epsilon) * r.t_v};
          }},
      rule.variant());
}

double temperature_for(const TemperatureRule& rule, std::span<const double> logits) {
  if (std::holds_alternative<rules::MultiSet>(rule.variant())) {
    throw ContractError("temperature_for: MultiSet rule has a temperature set; use temperatures_for");
  }
  return temperatures_for(rule, logits).front();
}

SampleStats sample_stats(const LogitRecord& record, StdKind kind) {
  const auto& z = record.logits;
  require_finite(z);
  SampleStats s;
  s.sample_id = record.sample_id;
  s.sigma = sample_std(z, kind);
  double mean = 0.0;
  for (double v : z) mean += v;
  s.mean = mean / static_cast<double>(z.size());
  const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
  s.v_max = *hi;
  s.v_min = *lo;
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - s.v_max);
  const double lse = s.v_max + std::log(sum);
  double entropy = 0.0;
  for (double v : z) {
    const double logp = v - lse;
    entropy -= std::exp(logp) * logp;
  }
  // Rounding can push a uniform distribution a hair past ln C.
  s.entropy = std::clamp(entropy, 0.0, std::log(static_cast<double>(z.size())));
  return s;
}

LogitSummary summarize(std::span<const LogitRecord> records, std::size_t bins, StdKind kind) {
  if (records.empty()) throw ContractError("summarize: empty record list");
  if (bins == 0) throw ContractError("summarize: histogram needs at least one bin");
  const std::size_t classes = records.front().logits.size();
  LogitSummary out;
  out.samples.reserve(records.size());
  for (const LogitRecord& r : records) {
    if (r.logits.size() != classes) {
      throw DimensionError("summarize: record " + std::to_string(r.sample_id) + " has " +
                           std::to_string(r.logits.size()) + " logits, expected " +
                           std::to_string(classes));
    }
    out.samples.push_back(sample_stats(r, kind));
  }
  Histogram& h = out.sigma_histogram;
  h.lo = out.samples.front().sigma;
  h.hi = h.lo;
  for (const SampleStats& s : out.samples) {
    h.lo = std::min(h.lo, s.sigma);
    h.hi = std::max(h.hi, s.sigma);
  }
  h.counts.assign(bins, 0);
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (const SampleStats& s : out.samples) {
    std::size_t bin = 0;
    if (width > 0.0) {
      bin = std::min(bins - 1, static_cast<std::size_t>((s.sigma - h.lo) / width));
    }
    ++h.counts[bin];
  }
  return out;
}

}  // namespace normkd

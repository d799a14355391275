#pragma once

// Independent 50-digit reference evaluators used only by tests. Straight
// textbook formulas, no stabilization tricks shared with the library.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <span>
#include <vector>

namespace normkd::oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

inline std::vector<Real> widen(std::span<const double> v) {
  return std::vector<Real>(v.begin(), v.end());
}

inline std::vector<double> narrow(const std::vector<Real>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const Real& x : v) out.push_back(static_cast<double>(x));
  return out;
}

inline std::vector<Real> softmax(std::span<const double> z, const Real& temperature) {
  std::vector<Real> e;
  Real sum = 0;
  for (double v : z) {
    e.push_back(boost::multiprecision::exp(Real(v) / temperature));
    sum += e.back();
  }
  for (Real& v : e) v /= sum;
  return e;
}

inline Real stddev(std::span<const double> z, bool corrected = true) {
  Real mean = 0;
  for (double v : z) mean += Real(v);
  mean /= z.size();
  Real ss = 0;
  for (double v : z) ss += (Real(v) - mean) * (Real(v) - mean);
  return boost::multiprecision::sqrt(ss / (corrected ? z.size() - 1 : z.size()));
}

inline std::vector<Real> norm_softmax(std::span<const double> z, double t_norm, double eps) {
  Real s = stddev(z);
  if (s < Real(eps)) s = Real(eps);
  return softmax(z, s * Real(t_norm));
}

inline std::vector<Real> multi_softmax(std::span<const double> z, std::span<const double> temps) {
  std::vector<Real> acc(z.size(), Real(0));
  for (double t : temps) {
    const auto p = softmax(z, Real(t));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  for (Real& v : acc) v /= temps.size();
  return acc;
}

inline Real kl(const std::vector<Real>& p, const std::vector<Real>& q) {
  Real sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0) continue;
    sum += p[i] * boost::multiprecision::log(p[i] / q[i]);
  }
  return sum;
}

inline Real kl(std::span<const double> p, std::span<const double> q) {
  return kl(widen(p), widen(q));
}

}  // namespace normkd::oracle

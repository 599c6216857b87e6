// Shared aliases, error types and small numeric helpers.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace w2s {

using VecD = std::vector<double>;
// A list of K coefficient/location vectors, each of dimension x_dim.
using VecList = std::vector<VecD>;

// Bad inputs, malformed configs, violated preconditions. CLI exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The computation itself broke down (EM, quadrature, assignment). CLI exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] > m) m = v[i];
  if (!std::isfinite(m)) return m;  // all -inf
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double log_sum_exp(const VecD& v) { return log_sum_exp(v.data(), v.size()); }

// In-place softmax of a vector of log-weights. Invariant to a common shift.
inline void softmax_inplace(VecD& logw) {
  const double lse = log_sum_exp(logw);
  if (!std::isfinite(lse)) throw NumericalError("softmax of all-zero weights");
  for (double& w : logw) w = std::exp(w - lse);
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const VecD& a, const VecD& b) {
  if (a.size() != b.size()) throw ValidationError("dot: dimension mismatch");
  return dot(a.data(), b.data(), a.size());
}

inline double sq_norm(const VecD& a) { return dot(a.data(), a.data(), a.size()); }

inline double sq_dist(const VecD& a, const VecD& b) {
  if (a.size() != b.size()) throw ValidationError("sq_dist: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double log_normal_pdf(double y, double mean, double sd) {
  constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))
  const double z = (y - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline void check_simplex(const std::string& name, const VecD& v, double tol = 1e-12) {
  if (v.empty()) throw ValidationError(name + ": empty simplex vector");
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) throw ValidationError(name + ": negative or non-finite entry");
    s += x;
  }
  if (std::abs(s - 1.0) > tol) throw ValidationError(name + ": entries do not sum to 1");
}

inline void check_finite(const std::string& name, const VecD& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError(name + ": non-finite entry");
}

}  // namespace w2s

// Shared fixtures for the test suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "w2s/system.hpp"

namespace w2s::testing {

// The K=2 constant-gating benchmark system used across the suites.
inline LatentConceptSystem canonical_benchmark() {
  LatentConceptSystem sys;
  sys.k = 2;
  sys.x_dim = 1;
  sys.pi_p = {0.6, 0.4};
  sys.pi_q = {0.1, 0.9};
  sys.strong.beta = {{1.0}, {-1.0}};
  sys.strong.noise_sd = 0.3;
  sys.weak_p.beta = {{1.5}, {-1.5}};
  sys.weak_p.noise_sd = 0.3;
  sys.weak_q.beta = {{1.7}, {-1.3}};
  sys.weak_q.noise_sd = 0.3;
  return sys;
}

// Symmetric 1-D grid bounded away from the origin, where linear experts are
// indistinguishable by construction.
inline std::vector<VecD> benchmark_grid(int points = 50, double lo = 0.2, double hi = 3.0) {
  std::vector<VecD> grid;
  const int half = points / 2;
  for (int i = 0; i < half; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (half - 1);
    grid.push_back({-x});
  }
  for (int i = 0; i < points - half; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (points - half - 1);
    grid.push_back({x});
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

// One-sample KS statistic against a supplied CDF.
template <class Cdf>
double ks_one_sample(std::vector<double> a, Cdf&& cdf) {
  std::sort(a.begin(), a.end());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / a.size()));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / a.size() - f));
  }
  return d;
}

// Kolmogorov critical constant at the 1% level: D_crit ~= c / sqrt(n).
inline constexpr double kKolmogorov1pct = 1.6276236115189502;

}  // namespace w2s::testing

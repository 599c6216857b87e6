// 1-D adaptive Gauss-Kronrod integration and Gauss-Hermite rules for
// expectations under Gaussian covariate laws.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <queue>
#include <vector>

#include "w2s/common.hpp"

namespace w2s {

struct QuadratureConfig {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_subdivisions = 2000;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
  int evaluations = 0;
  bool converged = false;
};

namespace detail {

// G7/K15 nodes on [0,1]: {node, gauss weight, kronrod weight}.
inline constexpr double kG7K15[8][3] = {
    {0.000000000000000, 0.417959183673469, 0.209482141084728},
    {0.405845151377397, 0.381830050505119, 0.190350578064785},
    {0.741531185599394, 0.279705391489277, 0.140653259715525},
    {0.949107912342759, 0.129484966168870, 0.063092092629979},
    {0.207784955007898, 0.0, 0.204432940075298},
    {0.586087235467691, 0.0, 0.169004726639267},
    {0.864864423359769, 0.0, 0.104790010322250},
    {0.991455371120813, 0.0, 0.022935322010529}};

template <class F>
void g7k15(const F& f, double a, double b, double& k15, double& err) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double f0 = f(c);
  double g7 = kG7K15[0][1] * f0;
  k15 = kG7K15[0][2] * f0;
  for (int i = 1; i < 8; ++i) {
    const double dx = h * kG7K15[i][0];
    const double fi = f(c + dx) + f(c - dx);
    g7 += kG7K15[i][1] * fi;
    k15 += kG7K15[i][2] * fi;
  }
  g7 *= h;
  k15 *= h;
  // Standard QUADPACK-style error model for the (G7,K15) pair.
  err = std::pow(200.0 * std::abs(k15 - g7), 1.5);
}

}  // namespace detail

// Adaptive bisection with a worst-interval-first queue. `points` is the
// initial partition (ascending, at least {a, b}); seeding it with known
// structural breakpoints of the integrand keeps narrow features from being
// straddled by a single rule application.
template <class F>
QuadResult integrate_partition(const F& f, const VecD& points,
                               const QuadratureConfig& cfg = {}) {
  if (points.size() < 2) throw ValidationError("integrate: need at least two endpoints");
  struct Interval {
    double a, b, value, error;
    bool operator<(const Interval& o) const { return error < o.error; }
  };
  QuadResult res;
  std::priority_queue<Interval> q;
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (!(points[i] < points[i + 1]))
      throw ValidationError("integrate: partition points must be ascending");
    double v, e;
    detail::g7k15(f, points[i], points[i + 1], v, e);
    res.evaluations += 15;
    q.push({points[i], points[i + 1], v, e});
    total += v;
    total_err += e;
  }
  int splits = 0;
  while (total_err > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total))) {
    if (splits >= cfg.max_subdivisions || q.empty()) {
      res.value = total;
      res.error = total_err;
      res.converged = false;
      return res;
    }
    Interval worst = q.top();
    q.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    double v1, e1, v2, e2;
    detail::g7k15(f, worst.a, mid, v1, e1);
    detail::g7k15(f, mid, worst.b, v2, e2);
    res.evaluations += 30;
    total += v1 + v2 - worst.value;
    total_err += e1 + e2 - worst.error;
    q.push({worst.a, mid, v1, e1});
    q.push({mid, worst.b, v2, e2});
    ++splits;
  }
  res.value = total;
  res.error = total_err;
  res.converged = true;
  return res;
}

template <class F>
QuadResult integrate(const F& f, double a, double b, const QuadratureConfig& cfg = {}) {
  return integrate_partition(f, VecD{a, b}, cfg);
}

// Nodes and weights of the n-point Gauss-Hermite rule for weight e^{-t^2}.
struct GaussHermite {
  VecD nodes;
  VecD weights;
};

GaussHermite gauss_hermite(int n);

// E[f(X)] for X ~ N(0, scale^2 I_d), tensor-product Gauss-Hermite.
// Supports d <= 3; the per-axis order defaults keep the grid small.
double gaussian_expectation(const std::function<double(const double*)>& f, int dim,
                            double scale = 1.0, int order = 64);

}  // namespace w2s

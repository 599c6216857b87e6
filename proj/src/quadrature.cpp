#include "w2s/quadrature.hpp"

#include <map>
#include <mutex>

namespace w2s {

namespace {

// Newton iteration on the physicists' Hermite polynomials, highest root first.
// Classic Numerical-Recipes style construction; weights w_i = 2^{n-1} n! sqrt(pi)
// / (n^2 H_{n-1}(x_i)^2), computed via the normalized recurrence for stability.
GaussHermite build_rule(int n) {
  if (n < 1) throw ValidationError("gauss_hermite: order must be >= 1");
  GaussHermite gh;
  gh.nodes.assign(n, 0.0);
  gh.weights.assign(n, 0.0);
  const double pim4 = 0.7511255444649425;  // pi^{-1/4}
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * gh.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * gh.nodes[1];
    } else {
      z = 2.0 * z - gh.nodes[i - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    gh.nodes[i] = z;
    gh.nodes[n - 1 - i] = -z;
    gh.weights[i] = 2.0 / (pp * pp);
    gh.weights[n - 1 - i] = gh.weights[i];
  }
  return gh;
}

const GaussHermite& cached_rule(int n) {
  static std::map<int, GaussHermite> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

}  // namespace

GaussHermite gauss_hermite(int n) { return cached_rule(n); }

double gaussian_expectation(const std::function<double(const double*)>& f, int dim,
                            double scale, int order) {
  if (dim < 1 || dim > 3)
    throw ValidationError("gaussian_expectation: only x_dim in {1,2,3} is supported");
  if (!(scale > 0.0)) throw ValidationError("gaussian_expectation: scale must be positive");
  const GaussHermite& gh = cached_rule(order);
  const double c = std::sqrt(2.0) * scale;
  const double norm = std::pow(M_PI, -0.5 * dim);
  double x[3] = {0, 0, 0};
  double total = 0.0;
  if (dim == 1) {
    for (int i = 0; i < order; ++i) {
      x[0] = c * gh.nodes[i];
      total += gh.weights[i] * f(x);
    }
  } else if (dim == 2) {
    for (int i = 0; i < order; ++i) {
      x[0] = c * gh.nodes[i];
      double row = 0.0;
      for (int j = 0; j < order; ++j) {
        x[1] = c * gh.nodes[j];
        row += gh.weights[j] * f(x);
      }
      total += gh.weights[i] * row;
    }
  } else {
    for (int i = 0; i < order; ++i) {
      x[0] = c * gh.nodes[i];
      double plane = 0.0;
      for (int j = 0; j < order; ++j) {
        x[1] = c * gh.nodes[j];
        double row = 0.0;
        for (int k = 0; k < order; ++k) {
          x[2] = c * gh.nodes[k];
          row += gh.weights[k] * f(x);
        }
        plane += gh.weights[j] * row;
      }
      total += gh.weights[i] * plane;
    }
  }
  return norm * total;
}

}  // namespace w2s

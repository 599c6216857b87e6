#include "w2s/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "w2s/rng.hpp"

namespace w2s {

L2QMetric metric_l2q(const RegressionFn& fitted, const LatentConceptSystem& sys,
                     std::size_t mc_points, std::uint64_t seed, Exec exec) {
  if (mc_points < 100) throw ValidationError("metric_l2q: mc_points must be >= 100");
  const int d = sys.x_dim;
  // Covariates drawn serially so the stream is thread-count independent.
  std::vector<double> xs(mc_points * static_cast<std::size_t>(d));
  Rng rng(seed);
  for (double& v : xs) v = sys.x_law.scale * rng.normal();

  const std::int64_t n = static_cast<std::int64_t>(mc_points);
  std::vector<double> sq(mc_points);
  parallel_for_trapped(
      n,
      [&](std::int64_t i) {
        const double* x = xs.data() + i * d;
        const double e = fitted(x) - target_regression(sys, x);
        sq[i] = e * e;
      },
      exec);
  const double mean_sq =
      blocked_sum(n, [&](std::int64_t i) { return sq[i]; }, exec) / static_cast<double>(n);
  const double mean_q4 =
      blocked_sum(n, [&](std::int64_t i) { return sq[i] * sq[i]; }, exec) /
      static_cast<double>(n);
  L2QMetric out;
  out.value = std::sqrt(mean_sq);
  const double var_mean = std::max(0.0, mean_q4 - mean_sq * mean_sq) / static_cast<double>(n);
  // delta method for sqrt; degenerate when the error is identically 0
  out.se = out.value > 0.0 ? 0.5 * std::sqrt(var_mean) / out.value : std::sqrt(std::sqrt(var_mean));
  return out;
}

namespace {

double block_distance(const VecD& fitted, const VecD& truth) {
  return std::sqrt(sq_dist(fitted, truth));
}

}  // namespace

double metric_param_error(const FittedMixture& fit, const LatentConceptSystem& sys,
                          ParamFamily family) {
  const int k = sys.k;
  if (fit.n_components() != k) throw ValidationError("metric_param_error: K mismatch");
  if (k > 8) throw ValidationError("metric_param_error: exact enumeration limited to K <= 8");

  const VecD* pi_truth = family == ParamFamily::Source ? &sys.pi_p : &sys.pi_q;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      const int t = perm[j];  // fitted component j compared against truth t
      double e = std::abs(fit.pi_hat[j] - (*pi_truth)[t]);
      switch (family) {
        case ParamFamily::Source:
          if (!fit.beta_strong) throw ValidationError("metric_param_error: fit lacks strong betas");
          e = std::max(e, block_distance((*fit.beta_strong)[j], sys.strong.beta[t]));
          e = std::max(e, block_distance(fit.beta_weak[j], sys.weak_p.beta[t]));
          if (fit.eta_hat && sys.gating.kind == GatingKind::Gaussian)
            e = std::max(e, block_distance((*fit.eta_hat)[j], sys.gating.eta[t]));
          break;
        case ParamFamily::Target:
          e = std::max(e, block_distance(fit.beta_weak[j], sys.weak_q.beta[t]));
          break;
        case ParamFamily::Identification:
          if (!fit.beta_strong) throw ValidationError("metric_param_error: fit lacks strong betas");
          e = std::max(e, block_distance((*fit.beta_strong)[j], sys.strong.beta[t]));
          break;
      }
      worst = std::max(worst, e);
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace w2s

// Scoring fitted regressions and parameter estimates against the generating
// system.

#pragma once

#include <cstdint>
#include <functional>

#include "w2s/em.hpp"
#include "w2s/parallel.hpp"
#include "w2s/system.hpp"

namespace w2s {

using RegressionFn = std::function<double(const double* x)>;

struct L2QMetric {
  double value = 0.0;  // root-mean-square distance under the covariate law
  double se = 0.0;     // Monte Carlo standard error of `value`
};

L2QMetric metric_l2q(const RegressionFn& fitted, const LatentConceptSystem& sys,
                     std::size_t mc_points, std::uint64_t seed, Exec exec = Exec::Parallel);

enum class ParamFamily {
  Source,          // pi^p, strong betas, weak_p betas (and eta when gaussian)
  Target,          // pi^q, weak_q betas
  Identification,  // pi^q, strong betas (the transported fit)
};

// Minimum over component permutations of the max per-component distance
// between fitted and true parameter blocks. Exact enumeration; K <= 8.
double metric_param_error(const FittedMixture& fit, const LatentConceptSystem& sys,
                          ParamFamily family);

}  // namespace w2s

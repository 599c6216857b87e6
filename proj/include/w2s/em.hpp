// Maximum-likelihood fitting of the gated mixture by EM with restarts:
// joint (y, y') experts on source triples, weak experts on target pairs.

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "w2s/parallel.hpp"
#include "w2s/system.hpp"

namespace w2s {

struct EMConfig {
  int max_iters = 500;
  double tol = 1e-8;  // relative log-likelihood improvement threshold
  int restarts = 10;
  enum class Init { KMeansPP, Random } init = Init::KMeansPP;
  double ridge = 1e-8;  // M-step least-squares regularizer
  std::uint64_t seed = 0;
  // Model family of the fit (the gating density is known, its locations are
  // estimated).
  GatingKind gating_kind = GatingKind::Constant;
  double gating_variance = 1.0;
  Exec exec = Exec::Parallel;

  void validate() const;
};

// Parameter bundle for likelihood evaluation; covers true systems (source or
// target view) and fitted mixtures.
struct MixtureParams {
  GatingKind gating_kind = GatingKind::Constant;
  double gating_variance = 1.0;
  VecList eta;  // empty for constant gating
  VecD pi;
  VecList beta_strong;  // empty when the y-channel is not modeled
  VecList beta_weak;    // empty when the y'-channel is not modeled
  double sigma_strong = 1.0;
  double sigma_weak = 1.0;

  int n_components() const { return static_cast<int>(pi.size()); }
  GatingParams gating() const { return {gating_kind, eta, gating_variance}; }
};

MixtureParams source_params(const LatentConceptSystem& sys);
MixtureParams target_params(const LatentConceptSystem& sys);

struct FittedMixture {
  VecD pi_hat;
  std::optional<VecList> eta_hat;       // gaussian-gating fits only
  std::optional<VecList> beta_strong;   // source fits only
  VecList beta_weak;
  double sigma_hat = 0.0;
  double loglik = 0.0;  // observed-data conditional log-likelihood
  int n_iters = 0;
  int restarts_used = 0;
  bool converged = false;
  GatingKind gating_kind = GatingKind::Constant;
  double gating_variance = 1.0;

  int n_components() const { return static_cast<int>(pi_hat.size()); }
  MixtureParams params() const;
};

// Exact observed-data log-likelihood sum_i log p(y_i, y'_i | x_i) (source) or
// sum_i log p(y'_i | x_i) (target) under Eq.-style mixture conditionals.
double loglikelihood(const SourceDataset& data, const MixtureParams& params,
                     Exec exec = Exec::Parallel);
double loglikelihood(const TargetDataset& data, const MixtureParams& params,
                     Exec exec = Exec::Parallel);

FittedMixture fit_source_mle(const SourceDataset& data, int k, const EMConfig& cfg);

// When `gating_fixed` carries the source-fit eta, the gating locations are
// held and only (pi^q, beta^{w_q}, sigma) are updated.
FittedMixture fit_target_mle(const TargetDataset& data, int k, const EMConfig& cfg,
                             const std::optional<GatingParams>& gating_fixed = std::nullopt);

}  // namespace w2s

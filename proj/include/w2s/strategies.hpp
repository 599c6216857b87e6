// The three weak-to-strong procedures and their analytic oracles: weak
// training with its limit-risk decomposition, label refinement through the
// conditional confusion matrix, and latent-concept identification.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "w2s/em.hpp"
#include "w2s/quadrature.hpp"
#include "w2s/system.hpp"

namespace w2s {

// A regression function x -> E[y|x] of mixture-mean form; shared by fitted
// strategies and oracles.
struct MixtureRegression {
  GatingParams gating;
  VecD pi;
  VecList beta;

  double eval(const double* x, int x_dim) const;
};

MixtureRegression oracle_regression(const LatentConceptSystem& sys);  // true q(x)

struct WeakTrainConfig {
  double lambda = 1.0;  // source weight; eta = 1/(1+lambda)
  int k_fit = 1;
  EMConfig em;  // seed/restarts reused by the projected-gradient optimizer

  void validate() const;
};

struct WeakTrainResult {
  FittedMixture fit;
  MixtureRegression regression;  // pi-weighted mixture mean of the fit
};

WeakTrainResult weak_train(const SourceDataset& source, const TargetDataset& target,
                           const WeakTrainConfig& cfg);

// Population limit of the weak-training excess risk, three ways: the formula
// as printed (leading eta), the exact-square variant (eta^2, doubled cross
// term), and an independent quadrature oracle of
// E_x[(E_Q[y|x] - best linear fit to the pseudo-label function)^2].
struct LimitRisk {
  double bound_printed = 0.0;
  double bound_exact_square = 0.0;
  double oracle_risk = 0.0;
  BiasDecomposition bias;
  bool exact_square_matches_oracle = false;
  double rel_err_exact = 0.0;
  double rel_err_printed = 0.0;
};

LimitRisk weak_train_limit_risk(const LatentConceptSystem& sys, double eta);

struct RefineMode {
  enum class Kind { SingleLabel, Icl } kind = Kind::SingleLabel;
  int m = 1;              // ICL context size
  int mc_draws = 2000;    // ICL outer-expectation sample count
  std::uint64_t seed = 0;

  static RefineMode single_label() { return {}; }
  static RefineMode icl(int m, std::uint64_t seed = 0, int draws = 2000) {
    return {Kind::Icl, m, draws, seed};
  }
};

struct RefinementPosterior {
  VecD x;
  VecD q_hat;                 // updated concept weights q_hat(k|x)
  VecList confusion;          // [true k'][predicted k], rows sum to 1
  RefineMode mode;
  VecD mc_se;                 // ICL only: standard error of each q_hat entry

  void check_invariants(const VecD& q_gate) const;
};

RefinementPosterior refinement_posterior(const LatentConceptSystem& sys, const VecD& x,
                                         const RefineMode& mode,
                                         const QuadratureConfig& quad = {});

struct RefinedDataset {
  int x_dim = 0;
  std::vector<double> x;
  VecD y_hat;
  std::uint64_t seed = 0;
};

// Draws y_hat | x from sum_k p(y|x,k) q_hat(k|x): the refined-label law.
RefinedDataset refine_labels(const LatentConceptSystem& sys, const std::vector<VecD>& xs,
                             const RefineMode& mode, std::uint64_t seed);

// Same law by ancestral sampling (draw y' from the target weak conditional,
// then the concept from the source posterior at that label, then y): the
// cheap route used by the experiment pipeline; no quadrature involved.
RefinedDataset sample_refined_dataset(const LatentConceptSystem& sys, std::size_t n,
                                      std::uint64_t seed);

// Population refined regression x -> sum_k q_hat(k|x) mu(x; beta_k).
double refined_regression(const LatentConceptSystem& sys, const double* x,
                          const QuadratureConfig& quad = {});

struct WliBound {
  double bound = 0.0;    // p(k|x) * exp(-c * Delta_k^2(x))
  double q_hat_k = 0.0;  // exact confusion entry P{k | x, k*}
  double delta_sq = 0.0;
  double p_k = 0.0;
};

WliBound wli_bound(const LatentConceptSystem& sys, const VecD& x, int k, int k_star, double c,
                   const QuadratureConfig& quad = {});

// Largest c for which the bound dominates the exact posterior on the grid.
double calibrate_wli_c(const LatentConceptSystem& sys, int k, int k_star,
                       const std::vector<VecD>& grid, const QuadratureConfig& quad = {});

struct Assignment {
  std::vector<int> a;          // target component -> source component
  VecList distances;           // [target k][source k'] squared distances
  bool is_permutation = false;

  std::vector<int> inverse() const;  // valid only when is_permutation
};

Assignment assign_components(const ExpertParams& weak_p_hat, const ExpertParams& weak_q_hat);

struct IdentificationResult {
  FittedMixture fit_q;         // transported model of Q: source experts, aligned target prior
  Assignment assignment;
  FittedMixture source_fit;
  FittedMixture target_fit;
  MixtureRegression regression;  // plug-in q_hat(x)
};

IdentificationResult latent_concept_identification(const SourceDataset& source,
                                                   const TargetDataset& target, int k,
                                                   const EMConfig& cfg);

}  // namespace w2s

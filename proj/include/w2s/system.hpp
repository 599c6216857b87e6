// Generative model: softmax-gated mixture of linear-Gaussian experts over a
// shared covariate law, with separate concept priors and weak experts in the
// source and target domains.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "w2s/common.hpp"

namespace w2s {

enum class GatingKind { Constant, Gaussian };

std::string to_string(GatingKind k);
GatingKind gating_kind_from_string(const std::string& s);

struct GatingParams {
  GatingKind kind = GatingKind::Constant;
  VecList eta;            // K location vectors; unused for Constant
  double variance = 1.0;  // shared isotropic variance of g; Gaussian only

  void validate(int k, int x_dim) const;
};

struct ExpertParams {
  VecList beta;           // K coefficient vectors
  double noise_sd = 1.0;  // shared within the family; zero = noiseless limit

  // Returns warnings (e.g. collinear betas); throws on hard violations.
  std::vector<std::string> validate(const std::string& name, int k, int x_dim) const;
};

// Covariate law: x ~ N(0, scale^2 I).
struct XLaw {
  double scale = 1.0;
};

struct LatentConceptSystem {
  int k = 0;
  int x_dim = 0;
  GatingParams gating;
  VecD pi_p;  // source concept prior
  VecD pi_q;  // target concept prior
  ExpertParams strong;  // shared across domains
  ExpertParams weak_p;  // source weak model
  ExpertParams weak_q;  // target weak model
  XLaw x_law;

  std::vector<std::string> validate() const;
};

struct SourceDataset {
  int x_dim = 0;
  std::vector<double> x;  // n * x_dim, row-major
  VecD y;
  VecD y_weak;
  std::uint64_t seed = 0;

  std::size_t n() const { return y.size(); }
  const double* row(std::size_t i) const { return x.data() + i * static_cast<std::size_t>(x_dim); }
};

struct TargetDataset {
  int x_dim = 0;
  std::vector<double> x;
  VecD y_weak;
  std::uint64_t seed = 0;

  std::size_t n() const { return y_weak.size(); }
  const double* row(std::size_t i) const { return x.data() + i * static_cast<std::size_t>(x_dim); }
};

// log pi_k + log g(x | eta_k), up to a k-independent constant.
void gate_log_weights(const double* x, int x_dim, const VecD& pi, const GatingParams& gating,
                      double* out);

// Softmax-normalized concept posterior p(k|x) under prior `pi`.
VecD gate_weights(const VecD& x, const VecD& pi, const GatingParams& gating);

// Ground-truth target regression E_Q[Y|x] = sum_k q(k|x) beta_k'x.
double target_regression(const LatentConceptSystem& sys, const VecD& x);
double target_regression(const LatentConceptSystem& sys, const double* x);

// Source regression E_P[Y|x] and the weak conditionals' means.
double source_regression(const LatentConceptSystem& sys, const double* x);
double weak_target_regression(const LatentConceptSystem& sys, const double* x);

// Per-concept functional bias components entering the weak-training limit
// risk. eps_p[k] = || (q(k|.) - p(k|.)) mu_k ||_{L2(x_law)} (source-model bias
// restricted to concept k) and eps_q[k] = || q(k|.) (mu_k - mu^{w_q}_k) ||.
// The scalar fields carry the exact L2 inner products of the summed bias
// functions e_P = sum_k ..., e_Q = sum_k ..., which the limit-risk formulas
// are built from; with cross-concept orthogonal biases they reduce to the
// K-vector dot products.
struct BiasDecomposition {
  VecD eps_p;
  VecD eps_q;
  double eps_p_sq = 0.0;  // E[e_P(x)^2]
  double eps_q_sq = 0.0;  // E[e_Q(x)^2]
  double cross = 0.0;     // E[e_P(x) e_Q(x)]
};

BiasDecomposition conditional_bias_vectors(const LatentConceptSystem& sys);

// Ancestral sampling x -> k -> (y, y'). The latent concept index is never
// stored in the dataset; `latent_out`, when non-null, captures it for
// oracle-side tests only.
SourceDataset sample_source(const LatentConceptSystem& sys, std::size_t n, std::uint64_t seed,
                            std::vector<int>* latent_out = nullptr);
TargetDataset sample_target(const LatentConceptSystem& sys, std::size_t n, std::uint64_t seed,
                            std::vector<int>* latent_out = nullptr);

}  // namespace w2s

// Mixture-of-HMMs instantiation: forward likelihoods, anchor-token checks,
// cycle witnesses separating transition matrices, and numerical
// linear-independence certification of mixture densities.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "w2s/common.hpp"
#include "w2s/parallel.hpp"

namespace w2s {

struct HMMParams {
  int n_states = 0;
  std::vector<double> transition;  // n_states * n_states, row-major, row-stochastic
  VecD start;

  double trans(int from, int to) const {
    return transition[static_cast<std::size_t>(from) * n_states + to];
  }
  void validate() const;
};

struct EmissionParams {
  int n_states = 0;
  int n_tokens = 0;
  std::vector<double> emission;  // n_states * n_tokens, row-stochastic

  double prob(int state, int token) const {
    return emission[static_cast<std::size_t>(state) * n_tokens + token];
  }
  void validate() const;
};

struct HMMMixture {
  std::vector<HMMParams> components;  // shared state space
  VecD pi;
  EmissionParams emission_x;
  EmissionParams emission_y;

  int n_states() const { return components.empty() ? 0 : components[0].n_states; }
  int n_tokens() const { return emission_x.n_tokens; }
  void validate() const;
};

// log p(x-sequence, final token) under one component (scaled forward pass;
// the final token is emitted after one more transition).
double component_loglik(const HMMParams& hmm, const EmissionParams& em_x,
                        const EmissionParams& em_y, const std::vector<int>& tokens,
                        int final_token);

// x-sequence only (no final emission).
double component_loglik_x(const HMMParams& hmm, const EmissionParams& em_x,
                          const std::vector<int>& tokens);

double mixture_loglik(const HMMMixture& mix, const std::vector<int>& tokens, int final_token);

struct AnchorVerdict {
  bool pass = false;
  std::vector<int> anchors;        // per state: witness token, -1 when none
  std::vector<int> missing_states;
};

AnchorVerdict anchor_word_check(const EmissionParams& em);

struct CycleWitness {
  std::vector<int> states;  // simple cycle; closure back to states[0] implicit
  double p_theta = 0.0;
  double p_theta_prime = 0.0;
};

// First (lexicographic, shortest-first) simple cycle with strictly larger
// probability under `theta` than `theta_prime`; nullopt when none exists
// within max_len.
std::optional<CycleWitness> cycle_witness(const HMMParams& theta, const HMMParams& theta_prime,
                                          int max_len);

struct IndependenceReport {
  int rank = 0;
  VecD singular_values;
  std::size_t support_size = 0;
  int max_seq_len = 0;
  std::vector<AnchorVerdict> anchors_x;  // one per mixture
  std::vector<AnchorVerdict> anchors_y;
};

// Enumerates all (x-sequence, y) pairs with len(x) in [1, max_seq_len] and
// reports the numerical rank of the mixtures' joint-probability vectors.
// Support-restricted by construction.
IndependenceReport independence_certificate(const std::vector<HMMMixture>& mixes,
                                            int max_seq_len, Exec exec = Exec::Parallel);

struct IclPosteriorHmm {
  VecD q_hat;
  VecD se;
  int m = 0;
  int draws = 0;
  std::uint64_t seed = 0;
};

// Monte Carlo estimate of the ICL refinement posterior: contexts of M
// (x-sequence, y') pairs drawn from the target mixture's one-hot component,
// scored against each source component.
IclPosteriorHmm icl_refinement_posterior_hmm(const HMMMixture& source_mix,
                                             const HMMMixture& target_mix, int m,
                                             const std::vector<int>& x, std::uint64_t seed,
                                             int draws = 2000, int context_len = -1);

}  // namespace w2s

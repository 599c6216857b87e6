#include "w2s/hmm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "w2s/rng.hpp"

namespace w2s {

namespace {

void check_stochastic_rows(const std::string& name, const std::vector<double>& m, int rows,
                           int cols) {
  if (static_cast<int>(m.size()) != rows * cols)
    throw ValidationError(name + ": wrong matrix shape");
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double v = m[static_cast<std::size_t>(r) * cols + c];
      if (!(v >= 0.0)) throw ValidationError(name + ": negative or non-finite entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12)
      throw ValidationError(name + ": row " + std::to_string(r) + " does not sum to 1");
  }
}

}  // namespace

void HMMParams::validate() const {
  if (n_states < 1) throw ValidationError("hmm: n_states must be >= 1");
  check_stochastic_rows("hmm.transition", transition, n_states, n_states);
  check_simplex("hmm.start", start);
  if (static_cast<int>(start.size()) != n_states)
    throw ValidationError("hmm.start: wrong length");
}

void EmissionParams::validate() const {
  if (n_states < 1 || n_tokens < 1)
    throw ValidationError("hmm emission: need positive state and token counts");
  check_stochastic_rows("hmm.emission", emission, n_states, n_tokens);
}

void HMMMixture::validate() const {
  if (components.empty()) throw ValidationError("hmm mixture: no components");
  check_simplex("hmm.pi", pi);
  if (pi.size() != components.size())
    throw ValidationError("hmm mixture: pi length != component count");
  const int h = components[0].n_states;
  for (const HMMParams& c : components) {
    c.validate();
    if (c.n_states != h)
      throw ValidationError("hmm mixture: components must share one state space");
  }
  emission_x.validate();
  emission_y.validate();
  if (emission_x.n_states != h || emission_y.n_states != h)
    throw ValidationError("hmm mixture: emission state count mismatch");
}

namespace {

void check_tokens(const EmissionParams& em, const std::vector<int>& tokens, int final_token,
                  const EmissionParams& em_y) {
  for (int t : tokens)
    if (t < 0 || t >= em.n_tokens) throw ValidationError("hmm: token out of alphabet");
  if (final_token < 0 || final_token >= em_y.n_tokens)
    throw ValidationError("hmm: final token out of alphabet");
}

// Scaled forward over the x-sequence; returns log p(tokens) and leaves the
// filtered state distribution in `alpha`. Returns -inf on zero probability.
double forward_x(const HMMParams& hmm, const EmissionParams& em_x,
                 const std::vector<int>& tokens, VecD& alpha) {
  const int h = hmm.n_states;
  alpha.assign(h, 0.0);
  double loglik = 0.0;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    VecD next(h, 0.0);
    if (j == 0) {
      for (int s = 0; s < h; ++s) next[s] = hmm.start[s] * em_x.prob(s, tokens[0]);
    } else {
      for (int s = 0; s < h; ++s) {
        if (alpha[s] == 0.0) continue;
        for (int s2 = 0; s2 < h; ++s2)
          next[s2] += alpha[s] * hmm.trans(s, s2);
      }
      for (int s2 = 0; s2 < h; ++s2) next[s2] *= em_x.prob(s2, tokens[j]);
    }
    double scale = 0.0;
    for (double v : next) scale += v;
    if (scale <= 0.0) return kNegInf;
    loglik += std::log(scale);
    for (int s = 0; s < h; ++s) alpha[s] = next[s] / scale;
  }
  return loglik;
}

}  // namespace

double component_loglik_x(const HMMParams& hmm, const EmissionParams& em_x,
                          const std::vector<int>& tokens) {
  if (tokens.empty()) throw ValidationError("hmm: empty token sequence");
  VecD alpha;
  return forward_x(hmm, em_x, tokens, alpha);
}

double component_loglik(const HMMParams& hmm, const EmissionParams& em_x,
                        const EmissionParams& em_y, const std::vector<int>& tokens,
                        int final_token) {
  if (tokens.empty()) throw ValidationError("hmm: empty token sequence");
  VecD alpha;
  const double lx = forward_x(hmm, em_x, tokens, alpha);
  if (lx == kNegInf) return kNegInf;
  // one more transition, then the final emission
  const int h = hmm.n_states;
  double val = 0.0;
  for (int s2 = 0; s2 < h; ++s2) {
    double pred = 0.0;
    for (int s = 0; s < h; ++s) pred += alpha[s] * hmm.trans(s, s2);
    val += pred * em_y.prob(s2, final_token);
  }
  if (val <= 0.0) return kNegInf;
  return lx + std::log(val);
}

namespace {

double mixture_loglik_unchecked(const HMMMixture& mix, const std::vector<int>& tokens,
                                int final_token) {
  VecD lw(mix.components.size(), kNegInf);
  for (std::size_t k = 0; k < mix.components.size(); ++k) {
    if (mix.pi[k] <= 0.0) continue;
    const double l =
        component_loglik(mix.components[k], mix.emission_x, mix.emission_y, tokens, final_token);
    lw[k] = l == kNegInf ? kNegInf : std::log(mix.pi[k]) + l;
  }
  return log_sum_exp(lw);
}

}  // namespace

double mixture_loglik(const HMMMixture& mix, const std::vector<int>& tokens, int final_token) {
  mix.validate();
  check_tokens(mix.emission_x, tokens, final_token, mix.emission_y);
  return mixture_loglik_unchecked(mix, tokens, final_token);
}

AnchorVerdict anchor_word_check(const EmissionParams& em) {
  em.validate();
  AnchorVerdict v;
  v.anchors.assign(em.n_states, -1);
  for (int h = 0; h < em.n_states; ++h) {
    for (int o = 0; o < em.n_tokens; ++o) {
      if (!(em.prob(h, o) > 0.0)) continue;
      bool exclusive = true;
      for (int h2 = 0; h2 < em.n_states && exclusive; ++h2)
        if (h2 != h && em.prob(h2, o) != 0.0) exclusive = false;
      if (exclusive) {
        v.anchors[h] = o;
        break;
      }
    }
    if (v.anchors[h] < 0) v.missing_states.push_back(h);
  }
  v.pass = v.missing_states.empty();
  return v;
}

namespace {

// DFS over simple state tuples in lexicographic order, shortest length first.
bool find_cycle(const HMMParams& a, const HMMParams& b, int max_len, std::vector<int>& states,
                std::vector<bool>& used, int target_len, double pa, double pb,
                CycleWitness& out) {
  if (static_cast<int>(states.size()) == target_len) {
    const int first = states.front(), last = states.back();
    const double ca = pa * a.trans(last, first);
    const double cb = pb * b.trans(last, first);
    if (ca > cb) {
      out.states = states;
      out.p_theta = ca;
      out.p_theta_prime = cb;
      return true;
    }
    return false;
  }
  for (int s = 0; s < a.n_states; ++s) {
    if (used[s]) continue;
    double na = pa, nb = pb;
    if (!states.empty()) {
      na *= a.trans(states.back(), s);
      nb *= b.trans(states.back(), s);
    }
    states.push_back(s);
    used[s] = true;
    if (find_cycle(a, b, max_len, states, used, target_len, na, nb, out)) return true;
    states.pop_back();
    used[s] = false;
  }
  return false;
}

}  // namespace

std::optional<CycleWitness> cycle_witness(const HMMParams& theta, const HMMParams& theta_prime,
                                          int max_len) {
  theta.validate();
  theta_prime.validate();
  if (theta.n_states != theta_prime.n_states)
    throw ValidationError("cycle_witness: state-space mismatch");
  if (max_len < theta.n_states)
    throw ValidationError("cycle_witness: max_len must be >= |H|");
  for (int len = 1; len <= max_len; ++len) {
    if (len > theta.n_states) break;  // simple cycles cannot be longer
    std::vector<int> states;
    std::vector<bool> used(theta.n_states, false);
    CycleWitness w;
    if (find_cycle(theta, theta_prime, max_len, states, used, len, 1.0, 1.0, w)) return w;
  }
  return std::nullopt;
}

IndependenceReport independence_certificate(const std::vector<HMMMixture>& mixes,
                                            int max_seq_len, Exec exec) {
  if (mixes.empty()) throw ValidationError("independence_certificate: no mixtures");
  if (max_seq_len < 1) throw ValidationError("independence_certificate: max_seq_len >= 1");
  for (const HMMMixture& m : mixes) m.validate();
  const int ox = mixes[0].emission_x.n_tokens;
  const int oy = mixes[0].emission_y.n_tokens;
  for (const HMMMixture& m : mixes)
    if (m.emission_x.n_tokens != ox || m.emission_y.n_tokens != oy)
      throw ValidationError("independence_certificate: mixtures must share alphabets");

  IndependenceReport rep;
  rep.max_seq_len = max_seq_len;
  double support = 0.0;
  for (int len = 1; len <= max_seq_len; ++len)
    support += std::pow(static_cast<double>(ox), len) * oy;
  if (support > 1e6)
    throw ValidationError("independence_certificate: enumerated support exceeds 1e6");
  rep.support_size = static_cast<std::size_t>(support);

  const int m = static_cast<int>(mixes.size());
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  std::vector<int> tokens;
  for (int len = 1; len <= max_seq_len; ++len) {
    std::int64_t count = 1;
    for (int j = 0; j < len; ++j) count *= ox;
    count *= oy;
    const std::size_t width = static_cast<std::size_t>(m) * (m + 1) / 2;
    std::vector<double> acc(width, 0.0);
    blocked_accumulate(
        count, width, acc.data(),
        [&](std::int64_t idx, double* a) {
          std::vector<int> seq(len);
          std::int64_t rem = idx;
          const int y = static_cast<int>(rem % oy);
          rem /= oy;
          for (int j = 0; j < len; ++j) {
            seq[j] = static_cast<int>(rem % ox);
            rem /= ox;
          }
          VecD vals(m);
          for (int a2 = 0; a2 < m; ++a2)
            vals[a2] = std::exp(mixture_loglik_unchecked(mixes[a2], seq, y));
          std::size_t c = 0;
          for (int r = 0; r < m; ++r)
            for (int cc = r; cc < m; ++cc) a[c++] += vals[r] * vals[cc];
        },
        exec);
    std::size_t c = 0;
    for (int r = 0; r < m; ++r)
      for (int cc = r; cc < m; ++cc) {
        gram(r, cc) += acc[c];
        gram(cc, r) = gram(r, cc);
        ++c;
      }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  rep.singular_values.resize(m);
  for (int i = 0; i < m; ++i)
    rep.singular_values[i] = std::sqrt(std::max(0.0, eig.eigenvalues()(m - 1 - i)));
  const double top = rep.singular_values.empty() ? 0.0 : rep.singular_values[0];
  for (double sv : rep.singular_values)
    if (top > 0.0 && sv > 1e-10 * top) ++rep.rank;

  for (const HMMMixture& mx : mixes) {
    rep.anchors_x.push_back(anchor_word_check(mx.emission_x));
    rep.anchors_y.push_back(anchor_word_check(mx.emission_y));
  }
  return rep;
}

namespace {

int sample_row(Rng& rng, const double* row, int n) {
  double u = rng.uniform();
  for (int j = 0; j + 1 < n; ++j) {
    u -= row[j];
    if (u <= 0.0) return j;
  }
  return n - 1;
}

}  // namespace

IclPosteriorHmm icl_refinement_posterior_hmm(const HMMMixture& source_mix,
                                             const HMMMixture& target_mix, int m,
                                             const std::vector<int>& x, std::uint64_t seed,
                                             int draws, int context_len) {
  source_mix.validate();
  target_mix.validate();
  if (m < 1) throw ValidationError("icl posterior: M must be >= 1");
  if (draws < 1) throw ValidationError("icl posterior: draws must be >= 1");
  if (source_mix.emission_x.n_tokens != target_mix.emission_x.n_tokens ||
      source_mix.emission_y.n_tokens != target_mix.emission_y.n_tokens)
    throw ValidationError("icl posterior: alphabet mismatch");
  check_tokens(source_mix.emission_x, x, 0, source_mix.emission_y);
  int k_star = 0;
  for (std::size_t j = 0; j < target_mix.pi.size(); ++j)
    if (target_mix.pi[j] > target_mix.pi[k_star]) k_star = static_cast<int>(j);
  if (target_mix.pi[k_star] < 1.0 - 1e-9)
    throw ValidationError("icl posterior: target prior must be one-hot");
  if (context_len < 1) context_len = static_cast<int>(x.size());

  const int kk = static_cast<int>(source_mix.components.size());
  VecD base(kk, kNegInf);
  for (int k = 0; k < kk; ++k) {
    if (source_mix.pi[k] <= 0.0) continue;
    const double lx = component_loglik_x(source_mix.components[k], source_mix.emission_x, x);
    base[k] = lx == kNegInf ? kNegInf : std::log(source_mix.pi[k]) + lx;
  }

  const HMMParams& gen = target_mix.components[k_star];
  const int h = gen.n_states;
  Rng rng(seed);
  VecD mean(kk, 0.0), msq(kk, 0.0);
  std::vector<int> ctx(context_len);
  int degenerate = 0;
  for (int r = 0; r < draws; ++r) {
    VecD lw = base;
    for (int j = 0; j < m; ++j) {
      int state = sample_row(rng, gen.start.data(), h);
      for (int t = 0; t < context_len; ++t) {
        if (t > 0) state = sample_row(rng, &gen.transition[state * h], h);
        ctx[t] = sample_row(rng, &target_mix.emission_x.emission[state * target_mix.emission_x.n_tokens],
                            target_mix.emission_x.n_tokens);
      }
      state = sample_row(rng, &gen.transition[state * h], h);
      const int yw = sample_row(rng, &target_mix.emission_y.emission[state * target_mix.emission_y.n_tokens],
                                target_mix.emission_y.n_tokens);
      for (int k = 0; k < kk; ++k) {
        if (lw[k] == kNegInf) continue;
        const double l = component_loglik(source_mix.components[k], source_mix.emission_x,
                                          source_mix.emission_y, ctx, yw);
        lw[k] = l == kNegInf ? kNegInf : lw[k] + l;
      }
    }
    if (!std::isfinite(log_sum_exp(lw))) {
      ++degenerate;
      continue;
    }
    softmax_inplace(lw);
    for (int k = 0; k < kk; ++k) {
      mean[k] += lw[k];
      msq[k] += lw[k] * lw[k];
    }
  }
  const int effective = draws - degenerate;
  if (effective == 0)
    throw NumericalError("icl posterior: every context had zero source likelihood");

  IclPosteriorHmm out;
  out.m = m;
  out.draws = effective;
  out.seed = seed;
  out.q_hat.assign(kk, 0.0);
  out.se.assign(kk, 0.0);
  for (int k = 0; k < kk; ++k) {
    out.q_hat[k] = mean[k] / effective;
    const double var = std::max(0.0, msq[k] / effective - out.q_hat[k] * out.q_hat[k]);
    out.se[k] = std::sqrt(var / effective);
  }
  return out;
}

}  // namespace w2s

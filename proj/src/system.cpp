#include "w2s/system.hpp"

#include <algorithm>
#include <functional>

#include "w2s/quadrature.hpp"
#include "w2s/rng.hpp"

namespace w2s {

std::string to_string(GatingKind k) {
  return k == GatingKind::Constant ? "constant" : "gaussian";
}

GatingKind gating_kind_from_string(const std::string& s) {
  if (s == "constant") return GatingKind::Constant;
  if (s == "gaussian") return GatingKind::Gaussian;
  throw ValidationError("unknown gating kind '" + s + "'");
}

void GatingParams::validate(int k, int x_dim) const {
  if (kind == GatingKind::Constant) return;
  if (!(variance > 0.0)) throw ValidationError("gating: variance must be positive");
  if (static_cast<int>(eta.size()) != k)
    throw ValidationError("gating: need one eta vector per concept");
  for (const VecD& e : eta) {
    if (static_cast<int>(e.size()) != x_dim)
      throw ValidationError("gating: eta dimension mismatch");
    check_finite("gating.eta", e);
  }
  for (std::size_t a = 0; a < eta.size(); ++a)
    for (std::size_t b = a + 1; b < eta.size(); ++b)
      if (sq_dist(eta[a], eta[b]) <= 0.0)
        throw ValidationError("gating: eta vectors must be pairwise distinct");
}

std::vector<std::string> ExpertParams::validate(const std::string& name, int k,
                                                int x_dim) const {
  if (static_cast<int>(beta.size()) != k)
    throw ValidationError(name + ": need one beta vector per concept");
  for (const VecD& b : beta) {
    if (static_cast<int>(b.size()) != x_dim)
      throw ValidationError(name + ": beta dimension mismatch");
    check_finite(name + ".beta", b);
  }
  if (!(noise_sd >= 0.0)) throw ValidationError(name + ": noise_sd must be >= 0");
  std::vector<std::string> warnings;
  for (std::size_t a = 0; a < beta.size(); ++a)
    for (std::size_t b = a + 1; b < beta.size(); ++b)
      if (sq_dist(beta[a], beta[b]) <= 0.0)
        warnings.push_back(name + ": beta[" + std::to_string(a) + "] == beta[" +
                           std::to_string(b) + "] (components not distinct)");
  return warnings;
}

std::vector<std::string> LatentConceptSystem::validate() const {
  if (k < 1) throw ValidationError("system: k must be >= 1");
  if (x_dim < 1) throw ValidationError("system: x_dim must be >= 1");
  check_simplex("pi_p", pi_p);
  check_simplex("pi_q", pi_q);
  if (static_cast<int>(pi_p.size()) != k || static_cast<int>(pi_q.size()) != k)
    throw ValidationError("system: priors must have length k");
  if (!(x_law.scale > 0.0)) throw ValidationError("system: x_scale must be positive");
  gating.validate(k, x_dim);
  std::vector<std::string> warnings;
  for (const auto& [name, e] :
       {std::pair<const char*, const ExpertParams*>{"experts.strong", &strong},
        {"experts.weak_p", &weak_p},
        {"experts.weak_q", &weak_q}}) {
    auto w = e->validate(name, k, x_dim);
    warnings.insert(warnings.end(), w.begin(), w.end());
  }
  return warnings;
}

void gate_log_weights(const double* x, int x_dim, const VecD& pi, const GatingParams& gating,
                      double* out) {
  const std::size_t k = pi.size();
  for (std::size_t j = 0; j < k; ++j)
    out[j] = pi[j] > 0.0 ? std::log(pi[j]) : kNegInf;
  if (gating.kind == GatingKind::Gaussian) {
    const double inv2v = 0.5 / gating.variance;
    for (std::size_t j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (int t = 0; t < x_dim; ++t) {
        const double d = x[t] - gating.eta[j][t];
        d2 += d * d;
      }
      out[j] -= d2 * inv2v;
    }
  }
}

VecD gate_weights(const VecD& x, const VecD& pi, const GatingParams& gating) {
  if (gating.kind == GatingKind::Gaussian && !gating.eta.empty() &&
      gating.eta[0].size() != x.size())
    throw ValidationError("gate_weights: x dimension mismatch");
  check_simplex("gate_weights.pi", pi, 1e-9);
  VecD w(pi.size());
  gate_log_weights(x.data(), static_cast<int>(x.size()), pi, gating, w.data());
  softmax_inplace(w);
  return w;
}

namespace {

double mixture_mean(const double* x, int x_dim, const VecD& pi, const GatingParams& gating,
                    const VecList& beta) {
  VecD w(pi.size());
  gate_log_weights(x, x_dim, pi, gating, w.data());
  softmax_inplace(w);
  double m = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    m += w[j] * dot(x, beta[j].data(), static_cast<std::size_t>(x_dim));
  return m;
}

}  // namespace

double target_regression(const LatentConceptSystem& sys, const double* x) {
  return mixture_mean(x, sys.x_dim, sys.pi_q, sys.gating, sys.strong.beta);
}

double target_regression(const LatentConceptSystem& sys, const VecD& x) {
  if (static_cast<int>(x.size()) != sys.x_dim)
    throw ValidationError("target_regression: x dimension mismatch");
  return target_regression(sys, x.data());
}

double source_regression(const LatentConceptSystem& sys, const double* x) {
  return mixture_mean(x, sys.x_dim, sys.pi_p, sys.gating, sys.strong.beta);
}

double weak_target_regression(const LatentConceptSystem& sys, const double* x) {
  return mixture_mean(x, sys.x_dim, sys.pi_q, sys.gating, sys.weak_q.beta);
}

BiasDecomposition conditional_bias_vectors(const LatentConceptSystem& sys) {
  BiasDecomposition out;
  const int k = sys.k;
  out.eps_p.assign(k, 0.0);
  out.eps_q.assign(k, 0.0);
  const double s2 = sys.x_law.scale * sys.x_law.scale;

  if (sys.gating.kind == GatingKind::Constant) {
    // Gates are x-free; every bias component is linear in x, so the L2(x_law)
    // inner products reduce to coefficient dot products times E[x x'] = s2 I.
    VecList u(k), v(k);
    VecD usum(sys.x_dim, 0.0), vsum(sys.x_dim, 0.0);
    for (int j = 0; j < k; ++j) {
      u[j].resize(sys.x_dim);
      v[j].resize(sys.x_dim);
      for (int t = 0; t < sys.x_dim; ++t) {
        u[j][t] = (sys.pi_q[j] - sys.pi_p[j]) * sys.strong.beta[j][t];
        v[j][t] = sys.pi_q[j] * (sys.strong.beta[j][t] - sys.weak_q.beta[j][t]);
        usum[t] += u[j][t];
        vsum[t] += v[j][t];
      }
      out.eps_p[j] = std::sqrt(s2 * sq_norm(u[j]));
      out.eps_q[j] = std::sqrt(s2 * sq_norm(v[j]));
    }
    out.eps_p_sq = s2 * sq_norm(usum);
    out.eps_q_sq = s2 * sq_norm(vsum);
    out.cross = s2 * dot(usum, vsum);
    return out;
  }

  // Gaussian gating: gates depend on x; integrate under the covariate law.
  auto gates = [&](const double* x, const VecD& pi, VecD& w) {
    gate_log_weights(x, sys.x_dim, pi, sys.gating, w.data());
    softmax_inplace(w);
  };
  auto component = [&](const double* x, int j, bool source_side) {
    VecD wp(k), wq(k);
    gates(x, sys.pi_p, wp);
    gates(x, sys.pi_q, wq);
    const double mu = dot(x, sys.strong.beta[j].data(), sys.x_dim);
    if (source_side) return (wq[j] - wp[j]) * mu;
    const double muw = dot(x, sys.weak_q.beta[j].data(), sys.x_dim);
    return wq[j] * (mu - muw);
  };
  for (int j = 0; j < k; ++j) {
    out.eps_p[j] = std::sqrt(std::max(
        0.0, gaussian_expectation([&](const double* x) {
               const double f = component(x, j, true);
               return f * f;
             }, sys.x_dim, sys.x_law.scale)));
    out.eps_q[j] = std::sqrt(std::max(
        0.0, gaussian_expectation([&](const double* x) {
               const double f = component(x, j, false);
               return f * f;
             }, sys.x_dim, sys.x_law.scale)));
  }
  auto summed = [&](const double* x, bool source_side) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += component(x, j, source_side);
    return s;
  };
  out.eps_p_sq = gaussian_expectation(
      [&](const double* x) { const double f = summed(x, true); return f * f; }, sys.x_dim,
      sys.x_law.scale);
  out.eps_q_sq = gaussian_expectation(
      [&](const double* x) { const double f = summed(x, false); return f * f; }, sys.x_dim,
      sys.x_law.scale);
  out.cross = gaussian_expectation(
      [&](const double* x) { return summed(x, true) * summed(x, false); }, sys.x_dim,
      sys.x_law.scale);
  return out;
}

namespace {

// One record of ancestral sampling; the draw order (x, k-uniform, noise) is
// part of the determinism contract.
struct DrawnRecord {
  int concept_idx;
};

DrawnRecord draw_x_and_concept(const LatentConceptSystem& sys, const VecD& pi, Rng& rng,
                               double* xrow) {
  for (int t = 0; t < sys.x_dim; ++t) xrow[t] = sys.x_law.scale * rng.normal();
  VecD w(pi.size());
  gate_log_weights(xrow, sys.x_dim, pi, sys.gating, w.data());
  softmax_inplace(w);
  return {rng.categorical(w)};
}

}  // namespace

SourceDataset sample_source(const LatentConceptSystem& sys, std::size_t n, std::uint64_t seed,
                            std::vector<int>* latent_out) {
  if (n == 0) throw ValidationError("sample_source: n must be >= 1");
  sys.validate();
  SourceDataset ds;
  ds.x_dim = sys.x_dim;
  ds.seed = seed;
  ds.x.resize(n * static_cast<std::size_t>(sys.x_dim));
  ds.y.resize(n);
  ds.y_weak.resize(n);
  if (latent_out) latent_out->resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double* xrow = ds.x.data() + i * static_cast<std::size_t>(sys.x_dim);
    const auto rec = draw_x_and_concept(sys, sys.pi_p, rng, xrow);
    const int c = rec.concept_idx;
    ds.y[i] = dot(xrow, sys.strong.beta[c].data(), sys.x_dim) + sys.strong.noise_sd * rng.normal();
    ds.y_weak[i] =
        dot(xrow, sys.weak_p.beta[c].data(), sys.x_dim) + sys.weak_p.noise_sd * rng.normal();
    if (latent_out) (*latent_out)[i] = c;
  }
  return ds;
}

TargetDataset sample_target(const LatentConceptSystem& sys, std::size_t n, std::uint64_t seed,
                            std::vector<int>* latent_out) {
  if (n == 0) throw ValidationError("sample_target: n must be >= 1");
  sys.validate();
  TargetDataset ds;
  ds.x_dim = sys.x_dim;
  ds.seed = seed;
  ds.x.resize(n * static_cast<std::size_t>(sys.x_dim));
  ds.y_weak.resize(n);
  if (latent_out) latent_out->resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double* xrow = ds.x.data() + i * static_cast<std::size_t>(sys.x_dim);
    const auto rec = draw_x_and_concept(sys, sys.pi_q, rng, xrow);
    const int c = rec.concept_idx;
    ds.y_weak[i] =
        dot(xrow, sys.weak_q.beta[c].data(), sys.x_dim) + sys.weak_q.noise_sd * rng.normal();
    if (latent_out) (*latent_out)[i] = c;
  }
  return ds;
}

}  // namespace w2s

#include "w2s/strategies.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "w2s/rng.hpp"

namespace w2s {

double MixtureRegression::eval(const double* x, int x_dim) const {
  VecD w(pi.size());
  gate_log_weights(x, x_dim, pi, gating, w.data());
  softmax_inplace(w);
  double m = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    m += w[j] * dot(x, beta[j].data(), static_cast<std::size_t>(x_dim));
  return m;
}

MixtureRegression oracle_regression(const LatentConceptSystem& sys) {
  return {sys.gating, sys.pi_q, sys.strong.beta};
}

void WeakTrainConfig::validate() const {
  if (lambda < 0.0) throw ValidationError("weak_train: lambda must be >= 0");
  if (k_fit < 1) throw ValidationError("weak_train: k_fit must be >= 1");
}

namespace {

// Euclidean projection onto the probability simplex (Duchi et al.).
VecD project_simplex(VecD v) {
  VecD u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      theta = t;
    }
  }
  css = 0.0;
  for (std::size_t j = 0; j < static_cast<std::size_t>(rho); ++j) css += u[j];
  theta = (css - 1.0) / rho;
  for (double& x : v) x = std::max(0.0, x - theta);
  return v;
}

struct WeightedMoments {
  Eigen::MatrixXd gram;  // sum w x x'
  Eigen::VectorXd rhs;   // sum w x t
  double tt = 0.0;       // sum w t^2
  double total_weight = 0.0;
};

WeightedMoments weighted_moments(const SourceDataset& source, const TargetDataset& target,
                                 double lambda) {
  const int d = target.x_dim;
  WeightedMoments m{Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0, 0.0};
  auto add = [&](const double* x, double t, double w) {
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) m.gram(a, b) += w * x[a] * x[b];
      m.rhs(a) += w * x[a] * t;
    }
    m.tt += w * t * t;
    m.total_weight += w;
  };
  for (std::size_t i = 0; i < target.n(); ++i) add(target.row(i), target.y_weak[i], 1.0);
  for (std::size_t i = 0; i < source.n(); ++i) add(source.row(i), source.y[i], lambda);
  return m;
}

}  // namespace

WeakTrainResult weak_train(const SourceDataset& source, const TargetDataset& target,
                           const WeakTrainConfig& cfg) {
  cfg.validate();
  if (source.n() == 0 || target.n() == 0)
    throw ValidationError("weak_train: datasets must be nonempty");
  if (source.x_dim != target.x_dim) throw ValidationError("weak_train: x_dim mismatch");
  const int d = target.x_dim;
  const int k = cfg.k_fit;

  WeightedMoments m = weighted_moments(source, target, cfg.lambda);
  Eigen::MatrixXd reg = m.gram;
  for (int t = 0; t < d; ++t) reg(t, t) += cfg.em.ridge;
  Eigen::LDLT<Eigen::MatrixXd> solver(reg);

  // The loss touches the parameters only through the mean coefficients
  // c = sum_k pi_k beta_k, so the objective along any (pi, B) is
  // F(c) = c'Gc - 2c'h + const.
  auto objective = [&](const Eigen::VectorXd& c) {
    return c.dot(m.gram * c) - 2.0 * c.dot(m.rhs) + m.tt;
  };

  VecD pi;
  VecList beta;
  if (k == 1) {
    Eigen::VectorXd c = solver.solve(m.rhs);
    pi = {1.0};
    beta = {VecD(c.data(), c.data() + d)};
  } else {
    // Projected gradient over (pi, B) with seeded restarts.
    Rng rng(derive_seed(cfg.em.seed, "weak-train", source.n(), target.n()));
    double best_f = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.em.restarts; ++r) {
      VecD p(k);
      for (int j = 0; j < k; ++j) p[j] = rng.uniform(0.2, 1.0);
      p = project_simplex(p);
      Eigen::MatrixXd b(k, d);
      for (int j = 0; j < k; ++j)
        for (int t = 0; t < d; ++t) b(j, t) = rng.normal();
      double step = 1.0 / (m.gram.trace() + 1.0);
      Eigen::VectorXd c = b.transpose() * Eigen::Map<Eigen::VectorXd>(p.data(), k);
      double f = objective(c);
      for (int it = 0; it < cfg.em.max_iters; ++it) {
        Eigen::VectorXd gc = 2.0 * (m.gram * c - m.rhs);
        Eigen::MatrixXd gb = Eigen::Map<Eigen::VectorXd>(p.data(), k) * gc.transpose();
        Eigen::VectorXd gp = b * gc;
        bool advanced = false;
        for (int ls = 0; ls < 40; ++ls) {
          Eigen::MatrixXd b2 = b - step * gb;
          VecD p2(k);
          for (int j = 0; j < k; ++j) p2[j] = p[j] - step * gp(j);
          p2 = project_simplex(p2);
          Eigen::VectorXd c2 = b2.transpose() * Eigen::Map<Eigen::VectorXd>(p2.data(), k);
          const double f2 = objective(c2);
          if (f2 <= f) {
            b = std::move(b2);
            p = std::move(p2);
            c = std::move(c2);
            advanced = std::abs(f - f2) > 1e-14 * (std::abs(f) + 1.0);
            f = f2;
            step *= 1.3;
            break;
          }
          step *= 0.5;
        }
        if (!advanced) break;
      }
      if (f < best_f) {
        best_f = f;
        pi = p;
        beta.assign(k, VecD(d));
        for (int j = 0; j < k; ++j)
          for (int t = 0; t < d; ++t) beta[j][t] = b(j, t);
      }
    }
  }

  Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < k; ++j)
    for (int t = 0; t < d; ++t) c(t) += pi[j] * beta[j][t];
  const double mse = std::max(objective(c) / m.total_weight, 1e-300);

  WeakTrainResult out;
  out.fit.pi_hat = pi;
  out.fit.beta_strong = beta;
  out.fit.beta_weak = {};
  out.fit.sigma_hat = std::sqrt(mse);
  // Weighted Gaussian pseudo-label log-likelihood at the fitted scale.
  out.fit.loglik = -0.5 * m.total_weight * (1.0 + std::log(2.0 * M_PI * mse));
  out.fit.n_iters = 0;
  out.fit.restarts_used = k == 1 ? 1 : cfg.em.restarts;
  out.fit.converged = true;
  out.fit.gating_kind = GatingKind::Constant;
  out.regression = {GatingParams{}, pi, beta};
  return out;
}

LimitRisk weak_train_limit_risk(const LatentConceptSystem& sys, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("limit risk: eta must be in [0,1]");
  LimitRisk out;
  out.bias = conditional_bias_vectors(sys);
  const double a = out.bias.eps_p_sq, b = out.bias.eps_q_sq, c = out.bias.cross;
  out.bound_printed = eta * a + (1.0 - eta) * (1.0 - eta) * b + eta * (1.0 - eta) * c;
  out.bound_exact_square =
      eta * eta * a + (1.0 - eta) * (1.0 - eta) * b + 2.0 * eta * (1.0 - eta) * c;

  // Independent oracle: population least squares of the pseudo-label mean
  // function onto the weak-training class (linear in x), then the excess risk
  // against the true target regression, all by quadrature.
  const int d = sys.x_dim;
  const double s2 = sys.x_law.scale * sys.x_law.scale;
  auto pseudo_mean = [&](const double* x) {
    return eta * source_regression(sys, x) + (1.0 - eta) * weak_target_regression(sys, x);
  };
  VecD bstar(d, 0.0);
  for (int t = 0; t < d; ++t) {
    bstar[t] = gaussian_expectation(
                   [&](const double* x) { return x[t] * pseudo_mean(x); }, d,
                   sys.x_law.scale) /
               s2;
  }
  out.oracle_risk = gaussian_expectation(
      [&](const double* x) {
        const double e = target_regression(sys, x) - dot(x, bstar.data(), d);
        return e * e;
      },
      d, sys.x_law.scale);

  auto rel = [&](double v) {
    return std::abs(v - out.oracle_risk) / std::max(std::abs(out.oracle_risk), 1e-12);
  };
  out.rel_err_exact = rel(out.bound_exact_square);
  out.rel_err_printed = rel(out.bound_printed);
  out.exact_square_matches_oracle = out.rel_err_exact < 1e-3;
  return out;
}

namespace {

VecD posterior_log_weights(const LatentConceptSystem& sys, const double* x, const VecD& gate_p,
                           double y_weak) {
  VecD lw(sys.k);
  for (int j = 0; j < sys.k; ++j) {
    lw[j] = gate_p[j] > 0.0 ? std::log(gate_p[j]) : kNegInf;
    if (gate_p[j] > 0.0)
      lw[j] += log_normal_pdf(y_weak, dot(x, sys.weak_p.beta[j].data(), sys.x_dim),
                              sys.weak_p.noise_sd);
  }
  return lw;
}

// p(k | x, y') under the source model.
VecD weak_label_posterior(const LatentConceptSystem& sys, const double* x, const VecD& gate_p,
                          double y_weak) {
  VecD lw = posterior_log_weights(sys, x, gate_p, y_weak);
  softmax_inplace(lw);
  return lw;
}

VecList single_label_confusion(const LatentConceptSystem& sys, const VecD& x,
                               const QuadratureConfig& quad) {
  if (!(sys.weak_p.noise_sd > 0.0))
    throw ValidationError("refinement: weak_p noise_sd must be positive");
  const VecD gate_p = gate_weights(x, sys.pi_p, sys.gating);
  const double sp = sys.weak_p.noise_sd;

  // The posterior p(k|x,y') switches between experts in a narrow band around
  // each pairwise crossing point; seed the adaptive partition there so a
  // single rule application never straddles a shelf unseen.
  VecD crossings;
  for (int a = 0; a < sys.k; ++a) {
    if (gate_p[a] <= 0.0) continue;
    const double ma = dot(x.data(), sys.weak_p.beta[a].data(), sys.x_dim);
    for (int b = a + 1; b < sys.k; ++b) {
      if (gate_p[b] <= 0.0) continue;
      const double mb = dot(x.data(), sys.weak_p.beta[b].data(), sys.x_dim);
      if (std::abs(mb - ma) < 1e-12) continue;
      crossings.push_back(0.5 * (ma + mb) +
                          sp * sp * std::log(gate_p[a] / gate_p[b]) / (mb - ma));
    }
  }

  VecList confusion(sys.k, VecD(sys.k, 0.0));
  for (int kp = 0; kp < sys.k; ++kp) {
    const double mq = dot(x.data(), sys.weak_q.beta[kp].data(), sys.x_dim);
    const double sq = sys.weak_q.noise_sd;
    if (sq == 0.0) {
      // point-mass weak target labels: the integral collapses
      confusion[kp] = weak_label_posterior(sys, x.data(), gate_p, mq);
      continue;
    }
    const double lo = mq - 12.0 * sq, hi = mq + 12.0 * sq;
    VecD points = {lo, mq - 4.0 * sq, mq, mq + 4.0 * sq, hi};
    for (double c : crossings) {
      if (c > lo && c < hi) points.push_back(c);
      // a hair to each side of the shelf pins its width
      if (c - sp > lo && c - sp < hi) points.push_back(c - sp);
      if (c + sp > lo && c + sp < hi) points.push_back(c + sp);
    }
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-10; }),
                 points.end());
    for (int k = 0; k < sys.k; ++k) {
      auto f = [&](double y) {
        const VecD post = weak_label_posterior(sys, x.data(), gate_p, y);
        return post[k] * std::exp(log_normal_pdf(y, mq, sq));
      };
      const QuadResult r = integrate_partition(f, points, quad);
      if (!r.converged)
        throw NumericalError("refinement: quadrature did not converge (entry " +
                             std::to_string(kp) + "," + std::to_string(k) + ")");
      confusion[kp][k] = r.value;
    }
  }
  return confusion;
}

// One covariate draw conditioned on the target concept: rejection against the
// gate weight (constant gating accepts immediately).
void draw_x_given_concept(const LatentConceptSystem& sys, int concept_idx, Rng& rng,
                          double* x) {
  for (int tries = 0; tries < 100000; ++tries) {
    for (int t = 0; t < sys.x_dim; ++t) x[t] = sys.x_law.scale * rng.normal();
    if (sys.gating.kind == GatingKind::Constant) return;
    VecD w(sys.k);
    gate_log_weights(x, sys.x_dim, sys.pi_q, sys.gating, w.data());
    softmax_inplace(w);
    if (rng.uniform() <= w[concept_idx]) return;
  }
  throw NumericalError("refinement: rejection sampler starved (gate weight ~ 0)");
}

VecList icl_confusion(const LatentConceptSystem& sys, const VecD& x, const RefineMode& mode,
                      VecList& se_out) {
  if (mode.m < 1) throw ValidationError("refinement: ICL context size M must be >= 1");
  if (!(sys.weak_p.noise_sd > 0.0))
    throw ValidationError("refinement: weak_p noise_sd must be positive");
  const VecD gate_p = gate_weights(x, sys.pi_p, sys.gating);
  VecD log_pi_p(sys.k);
  for (int j = 0; j < sys.k; ++j)
    log_pi_p[j] = sys.pi_p[j] > 0.0 ? std::log(sys.pi_p[j]) : kNegInf;

  VecList confusion(sys.k, VecD(sys.k, 0.0));
  se_out.assign(sys.k, VecD(sys.k, 0.0));
  VecD ctx_x(sys.x_dim);
  for (int kp = 0; kp < sys.k; ++kp) {
    Rng rng(derive_seed(mode.seed, "icl-row", static_cast<std::uint64_t>(kp), mode.m));
    VecD mean(sys.k, 0.0), msq(sys.k, 0.0);
    for (int r = 0; r < mode.mc_draws; ++r) {
      VecD lw(sys.k);
      for (int j = 0; j < sys.k; ++j)
        lw[j] = gate_p[j] > 0.0 ? std::log(gate_p[j]) : kNegInf;
      for (int jdx = 0; jdx < mode.m; ++jdx) {
        draw_x_given_concept(sys, kp, rng, ctx_x.data());
        const double yw = dot(ctx_x.data(), sys.weak_q.beta[kp].data(), sys.x_dim) +
                          sys.weak_q.noise_sd * rng.normal();
        VecD lg(sys.k);
        gate_log_weights(ctx_x.data(), sys.x_dim, sys.pi_p, sys.gating, lg.data());
        for (int j = 0; j < sys.k; ++j) {
          if (lw[j] == kNegInf) continue;
          // p(x_j | k) / p(x_j) = gate_k(x_j) / pi_k, up to a k-free factor
          lw[j] += lg[j] - log_sum_exp(lg) - log_pi_p[j];
          lw[j] += log_normal_pdf(yw, dot(ctx_x.data(), sys.weak_p.beta[j].data(), sys.x_dim),
                                  sys.weak_p.noise_sd);
        }
      }
      softmax_inplace(lw);
      for (int j = 0; j < sys.k; ++j) {
        mean[j] += lw[j];
        msq[j] += lw[j] * lw[j];
      }
    }
    const double n = static_cast<double>(mode.mc_draws);
    for (int j = 0; j < sys.k; ++j) {
      confusion[kp][j] = mean[j] / n;
      const double var = std::max(0.0, msq[j] / n - confusion[kp][j] * confusion[kp][j]);
      se_out[kp][j] = std::sqrt(var / n);
    }
  }
  return confusion;
}

}  // namespace

void RefinementPosterior::check_invariants(const VecD& q_gate) const {
  const int k = static_cast<int>(q_hat.size());
  for (int kp = 0; kp < k; ++kp) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += confusion[kp][j];
    if (std::abs(s - 1.0) > 1e-8)
      throw NumericalError("refinement: confusion row " + std::to_string(kp) +
                           " sums to " + std::to_string(s));
  }
  for (int j = 0; j < k; ++j) {
    double v = 0.0;
    for (int kp = 0; kp < k; ++kp) v += q_gate[kp] * confusion[kp][j];
    if (std::abs(v - q_hat[j]) > 1e-8)
      throw NumericalError("refinement: q_hat != q(.|x) * confusion");
  }
}

RefinementPosterior refinement_posterior(const LatentConceptSystem& sys, const VecD& x,
                                         const RefineMode& mode,
                                         const QuadratureConfig& quad) {
  if (static_cast<int>(x.size()) != sys.x_dim)
    throw ValidationError("refinement: x dimension mismatch");
  RefinementPosterior out;
  out.x = x;
  out.mode = mode;
  VecList se;
  out.confusion = mode.kind == RefineMode::Kind::SingleLabel
                      ? single_label_confusion(sys, x, quad)
                      : icl_confusion(sys, x, mode, se);
  const VecD gate_q = gate_weights(x, sys.pi_q, sys.gating);
  out.q_hat.assign(sys.k, 0.0);
  for (int j = 0; j < sys.k; ++j)
    for (int kp = 0; kp < sys.k; ++kp) out.q_hat[j] += gate_q[kp] * out.confusion[kp][j];
  if (mode.kind == RefineMode::Kind::Icl) {
    out.mc_se.assign(sys.k, 0.0);
    for (int j = 0; j < sys.k; ++j) {
      double v = 0.0;
      for (int kp = 0; kp < sys.k; ++kp) v += gate_q[kp] * gate_q[kp] * se[kp][j] * se[kp][j];
      out.mc_se[j] = std::sqrt(v);
    }
  }
  out.check_invariants(gate_q);
  return out;
}

RefinedDataset refine_labels(const LatentConceptSystem& sys, const std::vector<VecD>& xs,
                             const RefineMode& mode, std::uint64_t seed) {
  if (xs.empty()) throw ValidationError("refine_labels: xs must be nonempty");
  RefinedDataset out;
  out.x_dim = sys.x_dim;
  out.seed = seed;
  out.x.reserve(xs.size() * static_cast<std::size_t>(sys.x_dim));
  out.y_hat.reserve(xs.size());
  Rng rng(seed);
  std::map<VecD, VecD> cache;  // posterior per distinct query point
  for (const VecD& x : xs) {
    auto it = cache.find(x);
    if (it == cache.end())
      it = cache.emplace(x, refinement_posterior(sys, x, mode).q_hat).first;
    const int k = rng.categorical(it->second);
    const double y = dot(x.data(), sys.strong.beta[k].data(), sys.x_dim) +
                     sys.strong.noise_sd * rng.normal();
    out.x.insert(out.x.end(), x.begin(), x.end());
    out.y_hat.push_back(y);
  }
  return out;
}

RefinedDataset sample_refined_dataset(const LatentConceptSystem& sys, std::size_t n,
                                      std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_refined_dataset: n must be >= 1");
  sys.validate();
  if (!(sys.weak_p.noise_sd > 0.0))
    throw ValidationError("refinement: weak_p noise_sd must be positive");
  RefinedDataset out;
  out.x_dim = sys.x_dim;
  out.seed = seed;
  out.x.resize(n * static_cast<std::size_t>(sys.x_dim));
  out.y_hat.resize(n);
  Rng rng(seed);
  VecD gate_q(sys.k), gate_p(sys.k);
  for (std::size_t i = 0; i < n; ++i) {
    double* xrow = out.x.data() + i * static_cast<std::size_t>(sys.x_dim);
    for (int t = 0; t < sys.x_dim; ++t) xrow[t] = sys.x_law.scale * rng.normal();
    gate_log_weights(xrow, sys.x_dim, sys.pi_q, sys.gating, gate_q.data());
    softmax_inplace(gate_q);
    const int kq = rng.categorical(gate_q);
    const double yw = dot(xrow, sys.weak_q.beta[kq].data(), sys.x_dim) +
                      sys.weak_q.noise_sd * rng.normal();
    gate_log_weights(xrow, sys.x_dim, sys.pi_p, sys.gating, gate_p.data());
    softmax_inplace(gate_p);
    const VecD post = weak_label_posterior(sys, xrow, gate_p, yw);
    const int k = rng.categorical(post);
    out.y_hat[i] = dot(xrow, sys.strong.beta[k].data(), sys.x_dim) +
                   sys.strong.noise_sd * rng.normal();
  }
  return out;
}

double refined_regression(const LatentConceptSystem& sys, const double* x,
                          const QuadratureConfig& quad) {
  VecD xv(x, x + sys.x_dim);
  const RefinementPosterior post = refinement_posterior(sys, xv, RefineMode::single_label(), quad);
  double m = 0.0;
  for (int j = 0; j < sys.k; ++j)
    m += post.q_hat[j] * dot(x, sys.strong.beta[j].data(), sys.x_dim);
  return m;
}

WliBound wli_bound(const LatentConceptSystem& sys, const VecD& x, int k, int k_star, double c,
                   const QuadratureConfig& quad) {
  if (k == k_star) throw ValidationError("wli_bound: k must differ from k_star");
  if (k < 0 || k >= sys.k || k_star < 0 || k_star >= sys.k)
    throw ValidationError("wli_bound: concept index out of range");
  WliBound out;
  const VecD gate_p = gate_weights(x, sys.pi_p, sys.gating);
  out.p_k = gate_p[k];
  const double delta = dot(x.data(), sys.weak_p.beta[k].data(), sys.x_dim) -
                       dot(x.data(), sys.weak_q.beta[k_star].data(), sys.x_dim);
  out.delta_sq = delta * delta;
  out.bound = out.p_k * std::exp(-c * out.delta_sq);
  const VecList confusion = single_label_confusion(sys, x, quad);
  out.q_hat_k = confusion[k_star][k];
  return out;
}

double calibrate_wli_c(const LatentConceptSystem& sys, int k, int k_star,
                       const std::vector<VecD>& grid, const QuadratureConfig& quad) {
  if (grid.empty()) throw ValidationError("wli calibration: empty grid");
  double c = std::numeric_limits<double>::infinity();
  for (const VecD& x : grid) {
    const WliBound b = wli_bound(sys, x, k, k_star, 0.0, quad);
    if (b.delta_sq <= 1e-12 || b.q_hat_k <= 0.0 || b.p_k <= 0.0) continue;
    c = std::min(c, std::log(b.p_k / b.q_hat_k) / b.delta_sq);
  }
  if (!std::isfinite(c))
    throw NumericalError("wli calibration: no grid point constrains c");
  return c;
}

Assignment assign_components(const ExpertParams& weak_p_hat, const ExpertParams& weak_q_hat) {
  const int k = static_cast<int>(weak_q_hat.beta.size());
  if (static_cast<int>(weak_p_hat.beta.size()) != k)
    throw ValidationError("assign_components: component count mismatch");
  Assignment out;
  out.distances.assign(k, VecD(k, 0.0));
  out.a.assign(k, 0);
  for (int kt = 0; kt < k; ++kt) {
    int best = 0;
    for (int ks = 0; ks < k; ++ks) {
      out.distances[kt][ks] = sq_dist(weak_q_hat.beta[kt], weak_p_hat.beta[ks]);
      if (out.distances[kt][ks] < out.distances[kt][best]) best = ks;
    }
    out.a[kt] = best;
  }
  std::vector<int> seen(k, 0);
  for (int v : out.a) ++seen[v];
  out.is_permutation = std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
  return out;
}

std::vector<int> Assignment::inverse() const {
  if (!is_permutation) throw ValidationError("assignment inverse: not a permutation");
  std::vector<int> inv(a.size());
  for (std::size_t kt = 0; kt < a.size(); ++kt) inv[a[kt]] = static_cast<int>(kt);
  return inv;
}

IdentificationResult latent_concept_identification(const SourceDataset& source,
                                                   const TargetDataset& target, int k,
                                                   const EMConfig& cfg) {
  if (source.n() == 0 || target.n() == 0)
    throw ValidationError("identification: datasets must be nonempty");
  IdentificationResult out;
  out.source_fit = fit_source_mle(source, k, cfg);

  std::optional<GatingParams> fixed;
  if (cfg.gating_kind == GatingKind::Gaussian)
    fixed = GatingParams{GatingKind::Gaussian, *out.source_fit.eta_hat, cfg.gating_variance};
  EMConfig tcfg = cfg;
  tcfg.seed = derive_seed(cfg.seed, "target-fit", target.n(), 0);
  out.target_fit = fit_target_mle(target, k, tcfg, fixed);

  out.assignment = assign_components(ExpertParams{out.source_fit.beta_weak, 0.0},
                                     ExpertParams{out.target_fit.beta_weak, 0.0});
  if (!out.assignment.is_permutation) {
    std::ostringstream msg;
    msg << "identification: assignment is not a bijection; d^2 matrix:";
    for (int kt = 0; kt < k; ++kt) {
      msg << " [";
      for (int ks = 0; ks < k; ++ks) msg << (ks ? "," : "") << out.assignment.distances[kt][ks];
      msg << "]";
    }
    throw NumericalError(msg.str());
  }

  // Transport the target prior onto the matched source components: source
  // component j carries pi_q_hat of the target component assigned to it.
  const std::vector<int> inv = out.assignment.inverse();
  VecD pi(k);
  VecList weak_aligned(k);
  for (int j = 0; j < k; ++j) {
    pi[j] = out.target_fit.pi_hat[inv[j]];
    weak_aligned[j] = out.target_fit.beta_weak[inv[j]];
  }
  out.fit_q.pi_hat = pi;
  out.fit_q.eta_hat = out.source_fit.eta_hat;
  out.fit_q.beta_strong = out.source_fit.beta_strong;
  out.fit_q.beta_weak = weak_aligned;
  out.fit_q.sigma_hat = out.source_fit.sigma_hat;
  out.fit_q.loglik = std::numeric_limits<double>::quiet_NaN();  // assembled, not fitted
  out.fit_q.n_iters = out.source_fit.n_iters + out.target_fit.n_iters;
  out.fit_q.restarts_used = out.source_fit.restarts_used + out.target_fit.restarts_used;
  out.fit_q.converged = out.source_fit.converged && out.target_fit.converged;
  out.fit_q.gating_kind = cfg.gating_kind;
  out.fit_q.gating_variance = cfg.gating_variance;

  GatingParams gating{cfg.gating_kind,
                      out.source_fit.eta_hat ? *out.source_fit.eta_hat : VecList{},
                      cfg.gating_variance};
  out.regression = {gating, pi, *out.source_fit.beta_strong};
  return out;
}

}  // namespace w2s

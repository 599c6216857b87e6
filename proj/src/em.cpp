#include "w2s/em.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>

#include "w2s/rng.hpp"

namespace w2s {

void EMConfig::validate() const {
  if (max_iters < 1) throw ValidationError("em: max_iters must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("em: tol must be positive");
  if (restarts < 1) throw ValidationError("em: restarts must be >= 1");
  if (ridge < 0.0) throw ValidationError("em: ridge must be >= 0");
  if (gating_kind == GatingKind::Gaussian && !(gating_variance > 0.0))
    throw ValidationError("em: gating variance must be positive");
}

MixtureParams source_params(const LatentConceptSystem& sys) {
  return {sys.gating.kind, sys.gating.variance, sys.gating.eta, sys.pi_p,
          sys.strong.beta,  sys.weak_p.beta,    sys.strong.noise_sd, sys.weak_p.noise_sd};
}

MixtureParams target_params(const LatentConceptSystem& sys) {
  return {sys.gating.kind, sys.gating.variance, sys.gating.eta, sys.pi_q,
          {},              sys.weak_q.beta,     1.0,             sys.weak_q.noise_sd};
}

MixtureParams FittedMixture::params() const {
  MixtureParams p;
  p.gating_kind = gating_kind;
  p.gating_variance = gating_variance;
  if (eta_hat) p.eta = *eta_hat;
  p.pi = pi_hat;
  if (beta_strong) p.beta_strong = *beta_strong;
  p.beta_weak = beta_weak;
  p.sigma_strong = sigma_hat;
  p.sigma_weak = sigma_hat;
  return p;
}

namespace {

struct DataView {
  std::int64_t n = 0;
  int x_dim = 0;
  const double* x = nullptr;
  const double* y = nullptr;   // null for target data
  const double* yw = nullptr;

  const double* row(std::int64_t i) const { return x + i * x_dim; }
  bool has_y() const { return y != nullptr; }
};

DataView view(const SourceDataset& d) {
  return {static_cast<std::int64_t>(d.n()), d.x_dim, d.x.data(), d.y.data(), d.y_weak.data()};
}
DataView view(const TargetDataset& d) {
  return {static_cast<std::int64_t>(d.n()), d.x_dim, d.x.data(), nullptr, d.y_weak.data()};
}

struct EStepSums {
  double joint = 0.0;  // observed-data loglik of the model EM ascends
  double cond = 0.0;   // conditional loglik sum_i log p(labels | x_i)
};

// Responsibilities r_ik ~ gate_k(x_i) * phi(y_i) * phi(yw_i) sharing one k.
EStepSums e_step(const DataView& d, const MixtureParams& p, double* resp, Exec exec) {
  const int k = p.n_components();
  const int dim = d.x_dim;
  const bool gaussian = p.gating_kind == GatingKind::Gaussian;
  // x-density normalizer of the joint model; k-free.
  const double x_const =
      gaussian ? -0.5 * dim * std::log(2.0 * M_PI * p.gating_variance) : 0.0;
  VecD log_pi(k);
  for (int j = 0; j < k; ++j) log_pi[j] = p.pi[j] > 0.0 ? std::log(p.pi[j]) : kNegInf;

  std::vector<double> joint_part, cond_part;
  const std::int64_t nb = (d.n + kBlock - 1) / kBlock;
  joint_part.assign(nb, 0.0);
  cond_part.assign(nb, 0.0);
  std::atomic<bool> degenerate{false};
  auto body = [&](std::int64_t b) {
    VecD lw(k), lgate(k);
    double sj = 0.0, sc = 0.0;
    const std::int64_t lo = b * kBlock, hi = std::min(d.n, lo + kBlock);
    for (std::int64_t i = lo; i < hi; ++i) {
      const double* xi = d.row(i);
      for (int j = 0; j < k; ++j) {
        double g = log_pi[j];
        if (gaussian) {
          double d2 = 0.0;
          for (int t = 0; t < dim; ++t) {
            const double dd = xi[t] - p.eta[j][t];
            d2 += dd * dd;
          }
          g -= 0.5 * d2 / p.gating_variance;
        }
        lgate[j] = g;
        double l = g;
        if (d.has_y())
          l += log_normal_pdf(d.y[i], dot(xi, p.beta_strong[j].data(), dim), p.sigma_strong);
        l += log_normal_pdf(d.yw[i], dot(xi, p.beta_weak[j].data(), dim), p.sigma_weak);
        lw[j] = l;
      }
      const double a = log_sum_exp(lw);
      const double bnorm = log_sum_exp(lgate);
      if (!std::isfinite(a)) {  // cannot throw out of the parallel region
        degenerate.store(true, std::memory_order_relaxed);
        return;
      }
      sj += a + x_const;
      sc += a - bnorm;
      double* r = resp + i * k;
      for (int j = 0; j < k; ++j) r[j] = std::exp(lw[j] - a);
    }
    joint_part[b] = sj;
    cond_part[b] = sc;
  };
  parallel_for(nb, body, exec);
  if (degenerate.load()) throw NumericalError("em: zero-likelihood record");
  EStepSums sums;
  for (std::int64_t b = 0; b < nb; ++b) {
    sums.joint += joint_part[b];
    sums.cond += cond_part[b];
  }
  return sums;
}

struct RestartAbort {};  // responsibility mass collapsed; reinitialize

// pi, eta, betas and sigma from responsibilities. Throws RestartAbort when a
// component's total responsibility falls below 1e-6 * n.
void m_step(const DataView& d, const EMConfig& cfg, bool update_eta, double* resp,
            MixtureParams& p) {
  const int k = p.n_components();
  const int dim = d.x_dim;
  const int tri = dim * (dim + 1) / 2;
  const bool has_y = d.has_y();
  // Per component: [count, sum_x(dim), gram(tri), rhs_y(dim)?, rhs_w(dim)]
  const int per_k = 1 + dim + tri + (has_y ? dim : 0) + dim;
  std::vector<double> acc(static_cast<std::size_t>(k) * per_k, 0.0);
  blocked_accumulate(
      d.n, acc.size(),
      acc.data(),
      [&](std::int64_t i, double* a) {
        const double* xi = d.row(i);
        const double* r = resp + i * k;
        for (int j = 0; j < k; ++j) {
          double* aj = a + static_cast<std::size_t>(j) * per_k;
          const double rj = r[j];
          aj[0] += rj;
          int off = 1;
          for (int t = 0; t < dim; ++t) aj[off + t] += rj * xi[t];
          off += dim;
          int c = 0;
          for (int t = 0; t < dim; ++t)
            for (int u = t; u < dim; ++u) aj[off + c++] += rj * xi[t] * xi[u];
          off += tri;
          if (has_y) {
            for (int t = 0; t < dim; ++t) aj[off + t] += rj * xi[t] * d.y[i];
            off += dim;
          }
          for (int t = 0; t < dim; ++t) aj[off + t] += rj * xi[t] * d.yw[i];
        }
      },
      cfg.exec);

  for (int j = 0; j < k; ++j) {
    const double* aj = acc.data() + static_cast<std::size_t>(j) * per_k;
    const double nk = aj[0];
    if (nk < 1e-6 * static_cast<double>(d.n)) throw RestartAbort{};
    p.pi[j] = nk / static_cast<double>(d.n);
    if (update_eta)
      for (int t = 0; t < dim; ++t) p.eta[j][t] = aj[1 + t] / nk;
    Eigen::MatrixXd gram(dim, dim);
    int c = 0;
    for (int t = 0; t < dim; ++t)
      for (int u = t; u < dim; ++u) {
        gram(t, u) = aj[1 + dim + c];
        gram(u, t) = aj[1 + dim + c];
        ++c;
      }
    for (int t = 0; t < dim; ++t) gram(t, t) += cfg.ridge;
    Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    int off = 1 + dim + tri;
    if (has_y) {
      Eigen::VectorXd rhs(dim);
      for (int t = 0; t < dim; ++t) rhs(t) = aj[off + t];
      Eigen::VectorXd b = solver.solve(rhs);
      for (int t = 0; t < dim; ++t) p.beta_strong[j][t] = b(t);
      off += dim;
    }
    Eigen::VectorXd rhs(dim);
    for (int t = 0; t < dim; ++t) rhs(t) = aj[off + t];
    Eigen::VectorXd b = solver.solve(rhs);
    for (int t = 0; t < dim; ++t) p.beta_weak[j][t] = b(t);
  }

  // Pooled residual variance across families.
  const double sse = blocked_sum(
      d.n,
      [&](std::int64_t i) {
        const double* xi = d.row(i);
        const double* r = resp + i * k;
        double s = 0.0;
        for (int j = 0; j < k; ++j) {
          if (has_y) {
            const double e = d.y[i] - dot(xi, p.beta_strong[j].data(), dim);
            s += r[j] * e * e;
          }
          const double e = d.yw[i] - dot(xi, p.beta_weak[j].data(), dim);
          s += r[j] * e * e;
        }
        return s;
      },
      cfg.exec);
  const int families = has_y ? 2 : 1;
  const double sigma2 =
      std::max(sse / (static_cast<double>(families) * static_cast<double>(d.n)), 1e-12);
  p.sigma_strong = p.sigma_weak = std::sqrt(sigma2);
}

// k-means++ seeding on the standardized joint feature vector (x, y, yw).
void kmeanspp_responsibilities(const DataView& d, int k, Rng& rng, double* resp) {
  const int dim = d.x_dim;
  const int f = dim + (d.has_y() ? 1 : 0) + 1;
  const std::int64_t n = d.n;
  std::vector<double> z(static_cast<std::size_t>(n) * f);
  for (std::int64_t i = 0; i < n; ++i) {
    double* zi = z.data() + i * f;
    const double* xi = d.row(i);
    int c = 0;
    for (int t = 0; t < dim; ++t) zi[c++] = xi[t];
    if (d.has_y()) zi[c++] = d.y[i];
    zi[c++] = d.yw[i];
  }
  for (int t = 0; t < f; ++t) {
    double m = 0.0, m2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) m += z[i * f + t];
    m /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double dv = z[i * f + t] - m;
      m2 += dv * dv;
    }
    const double sd = std::sqrt(std::max(m2 / static_cast<double>(n), 1e-12));
    for (std::int64_t i = 0; i < n; ++i) z[i * f + t] = (z[i * f + t] - m) / sd;
  }
  std::vector<std::int64_t> centers;
  centers.push_back(static_cast<std::int64_t>(rng.u64() % static_cast<std::uint64_t>(n)));
  VecD mind(static_cast<std::size_t>(n), 0.0);
  auto dist2 = [&](std::int64_t i, std::int64_t c) {
    double s = 0.0;
    for (int t = 0; t < f; ++t) {
      const double dv = z[i * f + t] - z[c * f + t];
      s += dv * dv;
    }
    return s;
  };
  for (std::int64_t i = 0; i < n; ++i) mind[i] = dist2(i, centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (double v : mind) total += v;
    std::int64_t pick;
    if (total <= 0.0) {
      pick = static_cast<std::int64_t>(rng.u64() % static_cast<std::uint64_t>(n));
    } else {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (std::int64_t i = 0; i < n; ++i) {
        u -= mind[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
    for (std::int64_t i = 0; i < n; ++i) mind[i] = std::min(mind[i], dist2(i, pick));
  }
  std::vector<std::int64_t> counts(k, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = dist2(i, centers[0]);
    for (int j = 1; j < k; ++j) {
      const double dj = dist2(i, centers[j]);
      if (dj < bd) {
        bd = dj;
        best = j;
      }
    }
    double* r = resp + i * k;
    std::fill(r, r + k, 0.0);
    r[best] = 1.0;
    ++counts[best];
  }
  for (int j = 0; j < k; ++j)
    if (counts[j] == 0) throw RestartAbort{};
}

void random_responsibilities(const DataView& d, int k, Rng& rng, double* resp) {
  for (std::int64_t i = 0; i < d.n; ++i) {
    double* r = resp + i * k;
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      r[j] = -std::log(rng.uniform());
      s += r[j];
    }
    for (int j = 0; j < k; ++j) r[j] /= s;
  }
}

struct RunResult {
  MixtureParams params;
  double cond_loglik = kNegInf;
  int n_iters = 0;
  bool converged = false;
};

RunResult run_one_restart(const DataView& d, int k, const EMConfig& cfg, bool update_eta,
                          const std::optional<GatingParams>& gating_fixed, std::uint64_t seed,
                          std::vector<double>& resp) {
  Rng rng(seed);
  MixtureParams p;
  p.gating_kind = cfg.gating_kind;
  p.gating_variance = cfg.gating_variance;
  p.pi.assign(k, 1.0 / k);
  if (cfg.gating_kind == GatingKind::Gaussian) {
    if (gating_fixed) {
      p.gating_variance = gating_fixed->variance;
      p.eta = gating_fixed->eta;
    } else {
      p.eta.assign(k, VecD(d.x_dim, 0.0));
    }
  }
  if (d.has_y()) p.beta_strong.assign(k, VecD(d.x_dim, 0.0));
  p.beta_weak.assign(k, VecD(d.x_dim, 0.0));

  if (k == 1) {
    std::fill(resp.begin(), resp.end(), 1.0);
  } else if (cfg.init == EMConfig::Init::KMeansPP) {
    kmeanspp_responsibilities(d, k, rng, resp.data());
  } else {
    random_responsibilities(d, k, rng, resp.data());
  }
  const bool eta_from_data =
      cfg.gating_kind == GatingKind::Gaussian && update_eta && !gating_fixed;
  m_step(d, cfg, eta_from_data, resp.data(), p);

  RunResult out;
  double prev_joint = kNegInf;
  double cond = kNegInf;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const EStepSums sums = e_step(d, p, resp.data(), cfg.exec);
    cond = sums.cond;
    out.n_iters = it;
    if (it > 1) {
      // Monotone EM up to floating-point slack; checked in test builds.
      assert(sums.joint >= prev_joint - 1e-9 * static_cast<double>(d.n) - 1e-9);
      if (sums.joint - prev_joint <= cfg.tol * (std::abs(prev_joint) + 1.0)) {
        out.converged = true;
        break;
      }
    }
    prev_joint = sums.joint;
    m_step(d, cfg, eta_from_data, resp.data(), p);
  }
  out.params = std::move(p);
  out.cond_loglik = cond;
  return out;
}

FittedMixture fit_mle(const DataView& d, int k, const EMConfig& cfg, bool update_eta,
                      const std::optional<GatingParams>& gating_fixed) {
  cfg.validate();
  if (k < 1) throw ValidationError("em: K must be >= 1");
  if (d.n < static_cast<std::int64_t>(5) * k * d.x_dim)
    throw ValidationError("em: need at least 5*K*x_dim records");
  for (std::int64_t i = 0; i < d.n; ++i) {
    const double* xi = d.row(i);
    for (int t = 0; t < d.x_dim; ++t)
      if (!std::isfinite(xi[t])) throw ValidationError("em: non-finite covariate");
    if (d.has_y() && !std::isfinite(d.y[i])) throw ValidationError("em: non-finite label");
    if (!std::isfinite(d.yw[i])) throw ValidationError("em: non-finite weak label");
  }
  if (gating_fixed) {
    if (gating_fixed->kind != cfg.gating_kind)
      throw ValidationError("em: gating_fixed kind mismatch");
    if (gating_fixed->kind == GatingKind::Gaussian) {
      if (static_cast<int>(gating_fixed->eta.size()) != k)
        throw ValidationError("em: gating_fixed needs K eta vectors");
      for (const VecD& e : gating_fixed->eta)
        if (static_cast<int>(e.size()) != d.x_dim)
          throw ValidationError("em: gating_fixed eta dimension mismatch");
    }
  }

  std::vector<double> resp(static_cast<std::size_t>(d.n) * k);
  RunResult best;
  int best_restart = -1;
  int completed = 0;
  for (int r = 0; r < cfg.restarts; ++r) {
    bool done = false;
    for (int attempt = 0; attempt < 5 && !done; ++attempt) {
      const std::uint64_t sub =
          derive_seed(cfg.seed, "em-restart", static_cast<std::uint64_t>(r),
                      static_cast<std::uint64_t>(attempt));
      try {
        RunResult res = run_one_restart(d, k, cfg, update_eta, gating_fixed, sub, resp);
        ++completed;
        if (best_restart < 0 || res.cond_loglik > best.cond_loglik) {
          best = std::move(res);
          best_restart = r;
        }
        done = true;
      } catch (const RestartAbort&) {
        // component collapsed; retry with a fresh init
      }
    }
  }
  if (best_restart < 0) throw NumericalError("em: all restarts collapsed");

  FittedMixture fit;
  fit.pi_hat = best.params.pi;
  if (cfg.gating_kind == GatingKind::Gaussian) fit.eta_hat = best.params.eta;
  if (d.has_y()) fit.beta_strong = best.params.beta_strong;
  fit.beta_weak = best.params.beta_weak;
  fit.sigma_hat = best.params.sigma_weak;
  fit.loglik = best.cond_loglik;
  fit.n_iters = best.n_iters;
  fit.restarts_used = completed;
  fit.converged = best.converged;
  fit.gating_kind = cfg.gating_kind;
  fit.gating_variance = best.params.gating_variance;
  return fit;
}

double loglik_impl(const DataView& d, const MixtureParams& p, Exec exec) {
  const int k = p.n_components();
  for (std::int64_t i = 0; i < d.n; ++i) {
    const double* xi = d.row(i);
    for (int t = 0; t < d.x_dim; ++t)
      if (!std::isfinite(xi[t])) throw ValidationError("loglikelihood: non-finite covariate");
    if ((d.has_y() && !std::isfinite(d.y[i])) || !std::isfinite(d.yw[i]))
      throw ValidationError("loglikelihood: non-finite label");
  }
  if (d.has_y() && static_cast<int>(p.beta_strong.size()) != k)
    throw ValidationError("loglikelihood: params lack a strong expert family");
  if (static_cast<int>(p.beta_weak.size()) != k)
    throw ValidationError("loglikelihood: params lack a weak expert family");
  if (!(p.sigma_weak > 0.0) || (d.has_y() && !(p.sigma_strong > 0.0)))
    throw ValidationError("loglikelihood: noise sd must be positive");
  const GatingParams gating = p.gating();
  return blocked_sum(
      d.n,
      [&](std::int64_t i) {
        const double* xi = d.row(i);
        VecD lw(k);
        gate_log_weights(xi, d.x_dim, p.pi, gating, lw.data());
        const double norm = log_sum_exp(lw);
        for (int j = 0; j < k; ++j) {
          if (d.has_y())
            lw[j] += log_normal_pdf(d.y[i], dot(xi, p.beta_strong[j].data(), d.x_dim),
                                    p.sigma_strong);
          lw[j] += log_normal_pdf(d.yw[i], dot(xi, p.beta_weak[j].data(), d.x_dim),
                                  p.sigma_weak);
        }
        return log_sum_exp(lw) - norm;
      },
      exec);
}

}  // namespace

double loglikelihood(const SourceDataset& data, const MixtureParams& params, Exec exec) {
  return loglik_impl(view(data), params, exec);
}

double loglikelihood(const TargetDataset& data, const MixtureParams& params, Exec exec) {
  return loglik_impl(view(data), params, exec);
}

FittedMixture fit_source_mle(const SourceDataset& data, int k, const EMConfig& cfg) {
  return fit_mle(view(data), k, cfg, /*update_eta=*/true, std::nullopt);
}

FittedMixture fit_target_mle(const TargetDataset& data, int k, const EMConfig& cfg,
                             const std::optional<GatingParams>& gating_fixed) {
  return fit_mle(view(data), k, cfg, /*update_eta=*/!gating_fixed, gating_fixed);
}

}  // namespace w2s

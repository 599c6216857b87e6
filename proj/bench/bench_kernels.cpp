// Timing harness comparing the OpenMP kernels against the serial reference.
// Both paths share one blocked summation order, so outputs must agree bitwise.

#include <chrono>
#include <cstdio>

#include "w2s/em.hpp"
#include "w2s/metrics.hpp"
#include "w2s/parallel.hpp"
#include "w2s/strategies.hpp"

using namespace w2s;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

LatentConceptSystem bench_system() {
  LatentConceptSystem sys;
  sys.k = 4;
  sys.x_dim = 3;
  sys.pi_p = {0.4, 0.3, 0.2, 0.1};
  sys.pi_q = {0.1, 0.2, 0.3, 0.4};
  sys.strong.beta = {{1.0, 0.5, -0.2}, {-1.0, 0.3, 0.8}, {0.2, -0.9, 0.4}, {0.6, 0.6, -0.6}};
  sys.strong.noise_sd = 0.4;
  sys.weak_p.beta = sys.strong.beta;
  sys.weak_p.noise_sd = 0.4;
  sys.weak_q.beta = sys.strong.beta;
  sys.weak_q.noise_sd = 0.4;
  for (auto& b : sys.weak_p.beta) b[0] += 0.3;
  for (auto& b : sys.weak_q.beta) b[0] += 0.35;
  return sys;
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    f();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n = 200000;
  if (argc > 1) n = static_cast<std::size_t>(std::atoll(argv[1]));
  const LatentConceptSystem sys = bench_system();
  const SourceDataset data = sample_source(sys, n, 42);
  std::printf("kernel benchmark: n = %zu, K = %d, x_dim = %d, threads = %d\n", n, sys.k,
              sys.x_dim, max_threads());

  // observed-data log-likelihood kernel
  const MixtureParams params = source_params(sys);
  double ll_serial = 0.0, ll_parallel = 0.0;
  const double t_ll_s =
      time_best_of(3, [&] { ll_serial = loglikelihood(data, params, Exec::Serial); });
  const double t_ll_p =
      time_best_of(3, [&] { ll_parallel = loglikelihood(data, params, Exec::Parallel); });
  std::printf("loglikelihood    serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   bit-equal %s\n",
              t_ll_s, t_ll_p, t_ll_s / t_ll_p, ll_serial == ll_parallel ? "yes" : "NO");

  // one full EM fit (E-step + M-step kernels dominate)
  EMConfig cfg;
  cfg.restarts = 2;
  cfg.max_iters = 60;
  cfg.seed = 7;
  FittedMixture fit_serial, fit_parallel;
  EMConfig scfg = cfg;
  scfg.exec = Exec::Serial;
  const double t_em_s = time_best_of(1, [&] { fit_serial = fit_source_mle(data, sys.k, scfg); });
  EMConfig pcfg = cfg;
  pcfg.exec = Exec::Parallel;
  const double t_em_p = time_best_of(1, [&] { fit_parallel = fit_source_mle(data, sys.k, pcfg); });
  std::printf("em fit           serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   bit-equal %s\n",
              t_em_s, t_em_p, t_em_s / t_em_p,
              fit_serial.loglik == fit_parallel.loglik ? "yes" : "NO");

  // Monte Carlo L2(Q) metric
  const MixtureRegression oracle = oracle_regression(sys);
  L2QMetric m_serial, m_parallel;
  const double t_mc_s = time_best_of(3, [&] {
    m_serial = metric_l2q([&](const double* x) { return oracle.eval(x, sys.x_dim) + 0.1; }, sys,
                          200000, 3, Exec::Serial);
  });
  const double t_mc_p = time_best_of(3, [&] {
    m_parallel = metric_l2q([&](const double* x) { return oracle.eval(x, sys.x_dim) + 0.1; },
                            sys, 200000, 3, Exec::Parallel);
  });
  std::printf("l2q metric       serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   bit-equal %s\n",
              t_mc_s, t_mc_p, t_mc_s / t_mc_p, m_serial.value == m_parallel.value ? "yes" : "NO");
  return 0;
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "w2s/harness.hpp"
#include "w2s/io.hpp"
#include "w2s/metrics.hpp"
#include "w2s/rng.hpp"

using namespace w2s;
using namespace w2s::testing;

namespace {

ExperimentConfig small_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.system = canonical_benchmark();
  cfg.strategies = {"weak_train", "identify"};
  cfg.n_grid = {400, 800};
  cfg.replicates = 2;
  cfg.base_seed = 7;
  cfg.out_dir = out_dir;
  cfg.mc_points = 1000;
  cfg.em.restarts = 3;
  return cfg;
}

std::string strip_wall_column(const std::string& path) {
  std::ifstream in(path);
  std::stringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t cut = line.rfind(',');
    out << line.substr(0, cut) << "\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("l2q metric: zero on the oracle, constant offset, exact swap penalty") {
  const LatentConceptSystem sys = canonical_benchmark();
  const MixtureRegression oracle = oracle_regression(sys);
  const L2QMetric zero = metric_l2q(
      [&](const double* x) { return oracle.eval(x, 1); }, sys, 5000, 3);
  CHECK(zero.value < 1e-12);

  const L2QMetric off = metric_l2q(
      [&](const double* x) { return oracle.eval(x, 1) + 1.0; }, sys, 5000, 3);
  CHECK(off.value == doctest::Approx(1.0).epsilon(3.0 * off.se + 1e-6));

  // deliberately swapped prior transport: |(pi2-pi1) - (pi1-pi2)| * |x| in L2
  MixtureRegression swapped = oracle;
  std::swap(swapped.pi[0], swapped.pi[1]);
  const L2QMetric swap = metric_l2q(
      [&](const double* x) { return swapped.eval(x, 1); }, sys, 200000, 4);
  // quadrature of the squared gap under the covariate law
  const double penalty = std::sqrt(gaussian_expectation(
      [&](const double* x) {
        const double d = swapped.eval(x, 1) - oracle.eval(x, 1);
        return d * d;
      },
      1));
  CHECK(swap.value == doctest::Approx(penalty).epsilon(0.02));
  CHECK_THROWS_AS(metric_l2q([](const double*) { return 0.0; }, sys, 50, 1), ValidationError);
}

TEST_CASE("parameter error metric: exact zeros and a single perturbed coefficient") {
  const LatentConceptSystem sys = canonical_benchmark();
  FittedMixture fit;
  fit.pi_hat = sys.pi_p;
  fit.beta_strong = sys.strong.beta;
  fit.beta_weak = sys.weak_p.beta;
  fit.sigma_hat = 0.3;
  CHECK(metric_param_error(fit, sys, ParamFamily::Source) == 0.0);

  FittedMixture swapped = fit;
  std::swap(swapped.pi_hat[0], swapped.pi_hat[1]);
  std::swap((*swapped.beta_strong)[0], (*swapped.beta_strong)[1]);
  std::swap(swapped.beta_weak[0], swapped.beta_weak[1]);
  CHECK(metric_param_error(swapped, sys, ParamFamily::Source) == 0.0);

  FittedMixture off = fit;
  (*off.beta_strong)[1][0] += 0.1;
  CHECK(metric_param_error(off, sys, ParamFamily::Source) == doctest::Approx(0.1).epsilon(1e-12));

  FittedMixture wrong;
  wrong.pi_hat = {1.0};
  wrong.beta_weak = {{0.0}};
  CHECK_THROWS_AS(metric_param_error(wrong, sys, ParamFamily::Target), ValidationError);
}

TEST_CASE("experiment: row shape, failure rows, determinism, aggregates") {
  const std::string dir_a = "harness_out_a";
  const std::string dir_b = "harness_out_b";
  ExperimentConfig cfg = small_config(dir_a);
  const ExperimentReport report = run_experiment(cfg);
  CHECK(report.rows.size() == cfg.strategies.size() * cfg.n_grid.size() * cfg.replicates);

  // fixed row order: (strategy, n, replicate)
  CHECK(report.rows[0].strategy == "weak_train");
  CHECK(report.rows[0].n_q == 400);
  CHECK(report.rows[0].replicate == 0);
  CHECK(report.rows[1].replicate == 1);
  CHECK(report.rows.back().strategy == "identify");
  CHECK(report.rows.back().n_q == 800);

  for (const StrategyReport& r : report.rows) {
    CHECK_FALSE(r.failed);
    CHECK(std::isfinite(r.l2q_error));
    CHECK(r.seed == derive_seed(cfg.base_seed, r.strategy,
                                static_cast<std::uint64_t>(r.n_q),
                                static_cast<std::uint64_t>(r.replicate)));
  }

  // schema version in the header row; wall time is the only unstable column
  {
    std::ifstream in(dir_a + "/rows.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("schema_version,", 0) == 0);
  }
  ExperimentConfig cfg_b = small_config(dir_b);
  run_experiment(cfg_b);
  CHECK(strip_wall_column(dir_a + "/rows.csv") == strip_wall_column(dir_b + "/rows.csv"));

  // aggregates recomputed from the raw rows match the emitted ones
  const std::vector<StrategyReport> raw = read_rows_csv(dir_a + "/rows.csv");
  const std::vector<AggregateRow> re = aggregate_rows(raw);
  REQUIRE(re.size() == report.aggregates.size());
  for (std::size_t i = 0; i < re.size(); ++i) {
    CHECK(re[i].strategy == report.aggregates[i].strategy);
    CHECK(re[i].median_l2q == report.aggregates[i].median_l2q);
    CHECK(re[i].iqr_l2q == report.aggregates[i].iqr_l2q);
  }

  CHECK(std::filesystem::exists(dir_a + "/l2q_vs_n.svg"));
  CHECK(std::filesystem::exists(dir_a + "/param_vs_n.svg"));
  CHECK(std::filesystem::exists(dir_a + "/final_n_bars.svg"));
  CHECK(std::filesystem::exists(dir_a + "/aggregates.csv"));
  CHECK(std::filesystem::exists(dir_a + "/slopes.csv"));

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("experiment: strategy failures become first-class rows") {
  ExperimentConfig cfg = small_config("harness_out_fail");
  // n below the EM minimum turns every identify replicate into a failed row
  cfg.n_grid = {4};
  cfg.strategies = {"identify"};
  const ExperimentReport report = run_experiment(cfg);
  REQUIRE(report.rows.size() == 2);
  for (const StrategyReport& r : report.rows) {
    CHECK(r.failed);
    CHECK_FALSE(r.reason.empty());
  }
  CHECK(report.aggregates[0].failures == 2);
  std::filesystem::remove_all("harness_out_fail");
}

TEST_CASE("experiment config parsing and validation") {
  const std::string sys_path = "harness_sys.toml";
  save_system(canonical_benchmark(), sys_path);
  const std::string text = R"(
[experiment]
system = "harness_sys.toml"
strategies = ["weak_train", "refine", "identify"]
n_grid = [1000, 4000]
replicates = 3
base_seed = 42
out_dir = "sweep_out"
mc_points = 2000

[em]
max_iters = 200
tol = 1e-8
restarts = 5
init = "kmeanspp"

[weak_train]
lambda = 1.0
)";
  const auto table = toml::Table::parse_string(text);
  const ExperimentConfig cfg = experiment_from_table(table, ".");
  CHECK(cfg.system.k == 2);
  CHECK(cfg.strategies.size() == 3);
  CHECK(cfg.replicates == 3);
  CHECK(cfg.em.restarts == 5);
  CHECK(cfg.weak_train.k_fit == 2);  // defaults to the system's K

  auto bad = toml::Table::parse_string(
      "[experiment]\nsystem = \"harness_sys.toml\"\nstrategies = [\"bogus\"]\n"
      "n_grid = [100]\nreplicates = 1\n");
  CHECK_THROWS_AS(experiment_from_table(bad, "."), ValidationError);
  auto unordered = toml::Table::parse_string(
      "[experiment]\nsystem = \"harness_sys.toml\"\nstrategies = [\"refine\"]\n"
      "n_grid = [400, 200]\nreplicates = 1\n");
  CHECK_THROWS_AS(experiment_from_table(unordered, "."), ValidationError);
  std::filesystem::remove(sys_path);
}

TEST_CASE("fitted mixture JSON round-trip") {
  FittedMixture fit;
  fit.pi_hat = {0.25, 0.75};
  fit.eta_hat = VecList{{-1.0}, {1.0}};
  fit.beta_strong = VecList{{1.5}, {-0.5}};
  fit.beta_weak = {{2.0}, {-2.0}};
  fit.sigma_hat = 0.31;
  fit.loglik = -1234.5;
  fit.n_iters = 17;
  fit.restarts_used = 10;
  fit.converged = true;
  fit.gating_kind = GatingKind::Gaussian;
  fit.gating_variance = 0.8;
  const FittedMixture back = fitted_mixture_from_json(fitted_mixture_to_json(fit));
  CHECK(back.pi_hat == fit.pi_hat);
  CHECK(*back.eta_hat == *fit.eta_hat);
  CHECK(*back.beta_strong == *fit.beta_strong);
  CHECK(back.beta_weak == fit.beta_weak);
  CHECK(back.sigma_hat == fit.sigma_hat);
  CHECK(back.loglik == fit.loglik);
  CHECK(back.converged);
  CHECK(back.gating_kind == GatingKind::Gaussian);
}

TEST_CASE("plot emission guards") {
  ExperimentReport empty;
  CHECK_THROWS_AS(emit_plots(empty, "nowhere"), ValidationError);

  // single point: plot renders without a slope annotation
  ExperimentReport single;
  StrategyReport row;
  row.strategy = "identify";
  row.n_p = row.n_q = 1000;
  row.l2q_error = 0.1;
  single.rows = {row};
  single.aggregates = aggregate_rows(single.rows);
  single.slopes = fit_slopes(single.aggregates);
  CHECK(single.slopes.empty());
  emit_plots(single, "plot_single");
  CHECK(std::filesystem::exists("plot_single/l2q_vs_n.svg"));
  std::filesystem::remove_all("plot_single");
}

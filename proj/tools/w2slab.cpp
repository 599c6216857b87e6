// Command-line front end: dataset simulation, mixture fitting, single
// strategy runs, full sweeps, HMM identifiability certificates, and
// refinement inspection.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "w2s/harness.hpp"
#include "w2s/io.hpp"
#include "w2s/metrics.hpp"
#include "w2s/rng.hpp"
#include "w2s/strategies.hpp"

using namespace w2s;

namespace {

struct GridSpec {
  double lo = -3.0, hi = 3.0;
  int points = 50;
};

GridSpec parse_grid(const std::string& s) {
  GridSpec g;
  if (s.empty()) return g;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d", &g.lo, &g.hi, &g.points) != 3 || g.points < 2 ||
      !(g.lo < g.hi))
    throw ValidationError("bad grid spec '" + s + "' (expected lo:hi:points)");
  return g;
}

void write_or_print(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

EMConfig em_for_system(const LatentConceptSystem& sys, std::uint64_t seed) {
  EMConfig em;
  em.seed = seed;
  em.gating_kind = sys.gating.kind;
  em.gating_variance = sys.gating.variance;
  return em;
}

int run_simulate(const std::string& config, std::int64_t n, std::uint64_t seed,
                 const std::string& out_dir, const std::string& domain) {
  const LatentConceptSystem sys = load_system(config);
  std::filesystem::create_directories(out_dir);
  if (domain == "source" || domain == "both") {
    const SourceDataset src = sample_source(sys, n, derive_seed(seed, "simulate-source", n, 0));
    write_source_csv(src, out_dir + "/source.csv");
    std::cout << "wrote " << out_dir << "/source.csv (" << src.n() << " rows)\n";
  }
  if (domain == "target" || domain == "both") {
    const TargetDataset tgt = sample_target(sys, n, derive_seed(seed, "simulate-target", n, 0));
    write_target_csv(tgt, out_dir + "/target.csv");
    std::cout << "wrote " << out_dir << "/target.csv (" << tgt.n() << " rows)\n";
  }
  return 0;
}

int run_fit(const std::string& data, const std::string& domain, int k,
            const std::string& system_config, std::uint64_t seed, const std::string& out) {
  EMConfig em;
  em.seed = seed;
  if (!system_config.empty()) {
    const LatentConceptSystem sys = load_system(system_config);
    em.gating_kind = sys.gating.kind;
    em.gating_variance = sys.gating.variance;
  }
  FittedMixture fit;
  if (domain == "source") {
    fit = fit_source_mle(read_source_csv(data), k, em);
  } else if (domain == "target") {
    fit = fit_target_mle(read_target_csv(data), k, em);
  } else {
    throw ValidationError("fit: --domain must be 'source' or 'target'");
  }
  write_or_print(fitted_mixture_to_json(fit) + "\n", out);
  std::cerr << "loglik " << fit.loglik << ", " << fit.n_iters << " iters, converged "
            << (fit.converged ? "yes" : "no") << "\n";
  return 0;
}

int run_w2s(const std::string& config, const std::string& strategy, std::int64_t n,
            std::uint64_t seed, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.system = load_system(config);
  cfg.strategies = {strategy};
  cfg.n_grid = {n};
  cfg.replicates = 1;
  cfg.base_seed = seed;
  cfg.em = em_for_system(cfg.system, 0);
  cfg.weak_train.k_fit = cfg.system.k;
  cfg.weak_train.em = cfg.em;
  const StrategyReport row = run_strategy_once(cfg, strategy, n, 0);
  std::vector<StrategyReport> rows = {row};
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_rows_csv(rows, out_dir + "/row.csv");
  }
  std::ostringstream ss;
  ss << "strategy=" << row.strategy << " n=" << row.n_q << " seed=" << row.seed;
  if (row.failed) {
    ss << " FAILED: " << row.reason;
  } else {
    ss << " l2q=" << row.l2q_error;
    if (std::isfinite(row.param_error)) ss << " param_error=" << row.param_error;
    if (row.assignment_correct >= 0)
      ss << " assignment_correct=" << row.assignment_correct;
  }
  ss << " wall_ms=" << row.wall_ms << "\n";
  std::cout << ss.str();
  return row.failed ? 2 : 0;
}

int run_sweep(const std::string& config, const std::string& out_override,
              std::uint64_t seed_override, bool seed_given) {
  ExperimentConfig cfg = load_experiment(config);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_given) cfg.base_seed = seed_override;
  const ExperimentReport report = run_experiment(cfg);
  int failures = 0;
  for (const StrategyReport& r : report.rows) failures += r.failed ? 1 : 0;
  std::cout << report.rows.size() << " rows (" << failures << " failed) -> " << cfg.out_dir
            << "/rows.csv\n";
  for (const SlopeRow& s : report.slopes)
    std::cout << "slope[" << s.strategy << "] = " << s.slope << " (se " << s.se << ")\n";
  return 0;
}

std::string anchor_text(const AnchorVerdict& v, const std::string& label) {
  std::ostringstream ss;
  ss << label << ": " << (v.pass ? "PASS" : "FAIL");
  if (v.pass) {
    ss << " (anchors:";
    for (std::size_t h = 0; h < v.anchors.size(); ++h) ss << " " << v.anchors[h];
    ss << ")";
  } else {
    ss << " (states lacking anchors:";
    for (int h : v.missing_states) ss << " " << h;
    ss << ")";
  }
  ss << "\n";
  return ss.str();
}

int run_hmm_check(const std::vector<std::string>& configs, int max_len,
                  const std::string& out_dir) {
  std::vector<HMMMixture> mixes;
  for (const std::string& path : configs) mixes.push_back(load_hmm(path));
  std::ostringstream report;

  for (std::size_t m = 0; m < mixes.size(); ++m) {
    report << "mixture " << m << " (" << configs[m] << ")\n";
    report << "  " << anchor_text(anchor_word_check(mixes[m].emission_x), "anchor check, emission_x");
    report << "  " << anchor_text(anchor_word_check(mixes[m].emission_y), "anchor check, emission_y");
    const auto& comps = mixes[m].components;
    for (std::size_t a = 0; a < comps.size(); ++a)
      for (std::size_t b = a + 1; b < comps.size(); ++b) {
        const auto w = cycle_witness(comps[a], comps[b], max_len);
        report << "  cycle witness (component " << a << " vs " << b << "): ";
        if (w) {
          report << "states";
          for (int s : w->states) report << " " << s;
          report << " (p=" << w->p_theta << " > " << w->p_theta_prime << ")\n";
        } else {
          report << "none within length " << max_len << "\n";
        }
      }
  }

  // Certificate across the given mixtures; a single mixture is certified
  // across its own components treated as one-component mixtures.
  std::vector<HMMMixture> cert_input;
  if (mixes.size() == 1) {
    for (std::size_t c = 0; c < mixes[0].components.size(); ++c) {
      HMMMixture single = mixes[0];
      single.components = {mixes[0].components[c]};
      single.pi = {1.0};
      cert_input.push_back(std::move(single));
    }
  } else {
    cert_input = mixes;
  }
  const IndependenceReport cert = independence_certificate(cert_input, max_len);
  report << "independence certificate: rank " << cert.rank << " of " << cert_input.size()
         << " densities on " << cert.support_size
         << " enumerated sequences (support-restricted, len <= " << cert.max_seq_len << ")\n";
  report << "singular values:";
  for (double sv : cert.singular_values) report << " " << sv;
  report << "\n";

  std::cout << report.str();
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_or_print(report.str(), out_dir + "/hmm_check.txt");
    std::ostringstream csv;
    csv << "index,singular_value\n";
    for (std::size_t i = 0; i < cert.singular_values.size(); ++i)
      csv << i << "," << cert.singular_values[i] << "\n";
    write_or_print(csv.str(), out_dir + "/singular_values.csv");
  }
  return 0;
}

int run_refine_inspect(const std::string& config, const std::string& grid_spec, int k,
                       int k_star, double c, bool c_given, const std::string& out) {
  const LatentConceptSystem sys = load_system(config);
  if (sys.x_dim != 1)
    throw ValidationError("refine inspect: grid mode supports x_dim = 1");
  const GridSpec grid = parse_grid(grid_spec);
  std::vector<VecD> xs;
  for (int i = 0; i < grid.points; ++i)
    xs.push_back({grid.lo + (grid.hi - grid.lo) * i / (grid.points - 1)});

  const bool bound_mode = k >= 0 && k_star >= 0;
  double c_used = c;
  if (bound_mode && !c_given) {
    c_used = calibrate_wli_c(sys, k, k_star, xs);
    std::cerr << "calibrated c = " << c_used << " (largest constant dominating on the grid)\n";
  }

  std::ostringstream csv;
  csv << "x";
  for (int j = 0; j < sys.k; ++j) csv << ",p_gate_" << j;
  for (int j = 0; j < sys.k; ++j) csv << ",q_gate_" << j;
  for (int j = 0; j < sys.k; ++j) csv << ",q_hat_" << j;
  if (bound_mode) csv << ",delta_sq,wli_bound,q_hat_exact";
  csv << "\n";
  for (const VecD& x : xs) {
    const RefinementPosterior post = refinement_posterior(sys, x, RefineMode::single_label());
    const VecD gp = gate_weights(x, sys.pi_p, sys.gating);
    const VecD gq = gate_weights(x, sys.pi_q, sys.gating);
    csv << x[0];
    for (int j = 0; j < sys.k; ++j) csv << "," << gp[j];
    for (int j = 0; j < sys.k; ++j) csv << "," << gq[j];
    for (int j = 0; j < sys.k; ++j) csv << "," << post.q_hat[j];
    if (bound_mode) {
      const WliBound b = wli_bound(sys, x, k, k_star, c_used);
      csv << "," << b.delta_sq << "," << b.bound << "," << b.q_hat_k;
    }
    csv << "\n";
  }
  write_or_print(csv.str(), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-concept weak-to-strong simulation lab"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker thread count (0 = library default)");

  std::string config, out, data, domain = "both", strategy, grid_spec;
  std::int64_t n = 1000;
  std::uint64_t seed = 0;
  int k = 2, wli_k = -1, wli_kstar = -1, max_len = 4;
  double c = 0.0;

  auto* simulate = app.add_subcommand("simulate", "sample source/target dataset CSVs");
  simulate->add_option("--config", config, "system config (TOML)")->required();
  simulate->add_option("--n", n, "records per dataset")->required();
  simulate->add_option("--seed", seed, "base seed");
  simulate->add_option("--out", out, "output directory")->required();
  simulate->add_option("--domain", domain, "source|target|both");

  auto* fit = app.add_subcommand("fit", "fit a mixture to a dataset CSV by EM");
  fit->add_option("--data", data, "dataset CSV")->required();
  fit->add_option("--domain", domain, "source|target")->required();
  fit->add_option("--k", k, "component count")->required();
  fit->add_option("--config", config, "system config supplying the gating model");
  fit->add_option("--seed", seed, "EM seed");
  fit->add_option("--out", out, "report path (default: stdout)");

  auto* w2s_cmd = app.add_subcommand("w2s", "run one weak-to-strong strategy end-to-end");
  w2s_cmd->add_option("--config", config, "system config (TOML)")->required();
  w2s_cmd->add_option("--strategy", strategy, "weak_train|refine|identify")->required();
  w2s_cmd->add_option("--n", n, "per-domain sample size")->required();
  w2s_cmd->add_option("--seed", seed, "base seed");
  w2s_cmd->add_option("--out", out, "output directory for the report row");

  auto* sweep = app.add_subcommand("sweep", "run a full experiment from a config file");
  sweep->add_option("--config", config, "experiment config (TOML)")->required();
  sweep->add_option("--out", out, "override the configured output directory");
  auto* seed_opt = sweep->add_option("--seed", seed, "override the configured base seed");

  auto* hmm = app.add_subcommand("hmm", "HMM-mixture identifiability tools");
  hmm->require_subcommand(1);
  auto* hmm_check = hmm->add_subcommand("check", "anchor/cycle/independence certificates");
  std::vector<std::string> hmm_configs;
  hmm_check->add_option("--config", hmm_configs, "HMM mixture config(s)")->required();
  hmm_check->add_option("--max-len", max_len, "max cycle/sequence length");
  hmm_check->add_option("--out", out, "output directory for reports");

  auto* refine = app.add_subcommand("refine", "refinement diagnostics");
  refine->require_subcommand(1);
  auto* inspect = refine->add_subcommand("inspect", "print q_hat(k|x) and the WLI bound on a grid");
  inspect->add_option("--config", config, "system config (TOML)")->required();
  inspect->add_option("--grid", grid_spec, "x grid as lo:hi:points (default -3:3:50)");
  inspect->add_option("--k", wli_k, "bounded concept index");
  inspect->add_option("--kstar", wli_kstar, "target concept index");
  auto* c_opt = inspect->add_option("--c", c, "WLI constant (default: calibrated on the grid)");
  inspect->add_option("--out", out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  set_threads(jobs);
  try {
    if (simulate->parsed()) return run_simulate(config, n, seed, out, domain);
    if (fit->parsed()) return run_fit(data, domain, k, config, seed, out);
    if (w2s_cmd->parsed()) return run_w2s(config, strategy, n, seed, out);
    if (sweep->parsed()) return run_sweep(config, out, seed, !seed_opt->empty());
    if (hmm_check->parsed()) return run_hmm_check(hmm_configs, max_len, out);
    if (inspect->parsed())
      return run_refine_inspect(config, grid_spec, wli_k, wli_kstar, c, !c_opt->empty(), out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

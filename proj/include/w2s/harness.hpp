// Experiment orchestration: seeded replicates over a strategy/sample-size
// grid, CSV reporting, aggregates with fitted rates, and SVG plots.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "w2s/strategies.hpp"
#include "w2s/system.hpp"

namespace w2s {

inline constexpr const char* kReportSchemaVersion = "1";

struct ExperimentConfig {
  std::string system_path;
  LatentConceptSystem system;
  std::vector<std::string> strategies;  // of {"weak_train", "refine", "identify"}
  std::vector<std::int64_t> n_grid;     // ascending
  int replicates = 1;
  std::uint64_t base_seed = 0;
  std::string out_dir = "out";
  std::size_t mc_points = 4000;  // L2(Q) Monte Carlo points
  EMConfig em;
  WeakTrainConfig weak_train;
  Exec exec = Exec::Parallel;

  void validate() const;
};

struct StrategyReport {
  std::string strategy;
  std::int64_t n_p = 0;
  std::int64_t n_q = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  double param_error = std::numeric_limits<double>::quiet_NaN();
  double l2q_error = std::numeric_limits<double>::quiet_NaN();
  double l2q_se = std::numeric_limits<double>::quiet_NaN();
  int assignment_correct = -1;  // -1: not applicable
  bool failed = false;
  std::string reason;
  double wall_ms = 0.0;
};

struct AggregateRow {
  std::string strategy;
  std::int64_t n = 0;
  double median_l2q = 0.0;
  double iqr_l2q = 0.0;
  double median_param = 0.0;
  double iqr_param = 0.0;
  int failures = 0;
  int assignment_correct_count = 0;
  int assignment_total = 0;
};

struct SlopeRow {
  std::string strategy;
  double slope = 0.0;  // d log(median l2q) / d log(n)
  double se = 0.0;
};

struct ExperimentReport {
  std::vector<StrategyReport> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<SlopeRow> slopes;
};

// Runs one strategy end-to-end on freshly sampled data; used by both the
// sweep and the `w2s` subcommand.
StrategyReport run_strategy_once(const ExperimentConfig& cfg, const std::string& strategy,
                                 std::int64_t n, int replicate);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// CSV and plotting surfaces. Rows are written in (strategy, n, replicate)
// order; the wall_ms column is the only non-deterministic field.
void write_rows_csv(const std::vector<StrategyReport>& rows, const std::string& path);
std::vector<StrategyReport> read_rows_csv(const std::string& path);
void write_aggregates_csv(const std::vector<AggregateRow>& rows, const std::string& path);
void write_slopes_csv(const std::vector<SlopeRow>& rows, const std::string& path);

std::vector<AggregateRow> aggregate_rows(const std::vector<StrategyReport>& rows);
std::vector<SlopeRow> fit_slopes(const std::vector<AggregateRow>& aggregates);

void emit_plots(const ExperimentReport& report, const std::string& out_dir);

}  // namespace w2s

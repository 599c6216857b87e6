#include "w2s/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "w2s/metrics.hpp"
#include "w2s/rng.hpp"

namespace w2s {

void ExperimentConfig::validate() const {
  system.validate();
  if (strategies.empty()) throw ValidationError("experiment: strategies must be nonempty");
  for (const std::string& s : strategies)
    if (s != "weak_train" && s != "refine" && s != "identify")
      throw ValidationError("experiment: unknown strategy '" + s + "'");
  if (n_grid.empty()) throw ValidationError("experiment: n_grid must be nonempty");
  for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
    if (n_grid[i] >= n_grid[i + 1])
      throw ValidationError("experiment: n_grid must be strictly ascending");
  if (n_grid.front() < 1) throw ValidationError("experiment: n must be >= 1");
  if (replicates < 1) throw ValidationError("experiment: replicates must be >= 1");
  if (mc_points < 100) throw ValidationError("experiment: mc_points must be >= 100");
  em.validate();
  weak_train.validate();
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

// Correctness of the fitted assignment against the generating system: match
// each fitted weak family to the true components by nearest beta, then check
// the two matchings commute with a().
bool assignment_matches_truth(const IdentificationResult& res, const LatentConceptSystem& sys) {
  if (!res.assignment.is_permutation) return false;
  auto match = [&](const VecList& fitted, const VecList& truth) {
    std::vector<int> map(fitted.size());
    std::vector<int> used(truth.size(), 0);
    for (std::size_t j = 0; j < fitted.size(); ++j) {
      int best = -1;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < truth.size(); ++t) {
        const double d = sq_dist(fitted[j], truth[t]);
        if (d < bd) {
          bd = d;
          best = static_cast<int>(t);
        }
      }
      map[j] = best;
      ++used[best];
    }
    for (int u : used)
      if (u != 1) return std::vector<int>{};  // fits are ambiguous
    return map;
  };
  const std::vector<int> t_src = match(res.source_fit.beta_weak, sys.weak_p.beta);
  const std::vector<int> t_tgt = match(res.target_fit.beta_weak, sys.weak_q.beta);
  if (t_src.empty() || t_tgt.empty()) return false;
  for (std::size_t k = 0; k < t_tgt.size(); ++k)
    if (t_src[res.assignment.a[k]] != t_tgt[k]) return false;
  return true;
}

}  // namespace

StrategyReport run_strategy_once(const ExperimentConfig& cfg, const std::string& strategy,
                                 std::int64_t n, int replicate) {
  StrategyReport row;
  row.strategy = strategy;
  row.n_p = n;
  row.n_q = n;
  row.replicate = replicate;
  row.seed = derive_seed(cfg.base_seed, strategy, static_cast<std::uint64_t>(n),
                         static_cast<std::uint64_t>(replicate));
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const std::uint64_t src_seed = derive_seed(row.seed, "source", n, 0);
    const std::uint64_t tgt_seed = derive_seed(row.seed, "target", n, 0);
    const std::uint64_t mc_seed = derive_seed(row.seed, "mc", cfg.mc_points, 0);
    const std::uint64_t em_seed = derive_seed(row.seed, "em", 0, 0);
    const LatentConceptSystem& sys = cfg.system;

    if (strategy == "weak_train") {
      const SourceDataset src = sample_source(sys, n, src_seed);
      const TargetDataset tgt = sample_target(sys, n, tgt_seed);
      WeakTrainConfig wt = cfg.weak_train;
      wt.em.seed = em_seed;
      wt.em.exec = Exec::Serial;  // replicates already run concurrently
      const WeakTrainResult res = weak_train(src, tgt, wt);
      const L2QMetric m = metric_l2q(
          [&](const double* x) { return res.regression.eval(x, sys.x_dim); }, sys,
          cfg.mc_points, mc_seed, Exec::Serial);
      row.l2q_error = m.value;
      row.l2q_se = m.se;
    } else if (strategy == "refine") {
      // Refined labels, then the usual fit on them. The refined-label law is
      // a population quantity, so the error floor does not shrink with n.
      const RefinedDataset ref = sample_refined_dataset(sys, n, tgt_seed);
      TargetDataset as_target;
      as_target.x_dim = ref.x_dim;
      as_target.x = ref.x;
      as_target.y_weak = ref.y_hat;
      as_target.seed = ref.seed;
      EMConfig em = cfg.em;
      em.seed = em_seed;
      em.exec = Exec::Serial;
      const FittedMixture fit = fit_target_mle(as_target, sys.k, em);
      const MixtureRegression reg{
          GatingParams{fit.gating_kind, fit.eta_hat ? *fit.eta_hat : VecList{},
                       fit.gating_variance},
          fit.pi_hat, fit.beta_weak};
      const L2QMetric m = metric_l2q(
          [&](const double* x) { return reg.eval(x, sys.x_dim); }, sys, cfg.mc_points,
          mc_seed, Exec::Serial);
      row.l2q_error = m.value;
      row.l2q_se = m.se;
    } else if (strategy == "identify") {
      const SourceDataset src = sample_source(sys, n, src_seed);
      const TargetDataset tgt = sample_target(sys, n, tgt_seed);
      EMConfig em = cfg.em;
      em.seed = em_seed;
      em.exec = Exec::Serial;
      const IdentificationResult res = latent_concept_identification(src, tgt, sys.k, em);
      const L2QMetric m = metric_l2q(
          [&](const double* x) { return res.regression.eval(x, sys.x_dim); }, sys,
          cfg.mc_points, mc_seed, Exec::Serial);
      row.l2q_error = m.value;
      row.l2q_se = m.se;
      row.param_error = metric_param_error(res.fit_q, sys, ParamFamily::Identification);
      row.assignment_correct = assignment_matches_truth(res, sys) ? 1 : 0;
    } else {
      throw ValidationError("unknown strategy '" + strategy + "'");
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.reason = sanitize(e.what());
  }
  row.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

namespace {

double median(VecD v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile(VecD v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

}  // namespace

std::vector<AggregateRow> aggregate_rows(const std::vector<StrategyReport>& rows) {
  std::vector<AggregateRow> out;
  std::vector<std::pair<std::string, std::int64_t>> keys;
  for (const StrategyReport& r : rows) {
    const auto key = std::make_pair(r.strategy, r.n_q);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [strategy, n] : keys) {
    AggregateRow agg;
    agg.strategy = strategy;
    agg.n = n;
    VecD l2q, param;
    for (const StrategyReport& r : rows) {
      if (r.strategy != strategy || r.n_q != n) continue;
      if (r.failed) {
        ++agg.failures;
        continue;
      }
      if (std::isfinite(r.l2q_error)) l2q.push_back(r.l2q_error);
      if (std::isfinite(r.param_error)) param.push_back(r.param_error);
      if (r.assignment_correct >= 0) {
        ++agg.assignment_total;
        agg.assignment_correct_count += r.assignment_correct;
      }
    }
    agg.median_l2q = median(l2q);
    agg.iqr_l2q = quantile(l2q, 0.75) - quantile(l2q, 0.25);
    agg.median_param = median(param);
    agg.iqr_param = quantile(param, 0.75) - quantile(param, 0.25);
    out.push_back(std::move(agg));
  }
  return out;
}

std::vector<SlopeRow> fit_slopes(const std::vector<AggregateRow>& aggregates) {
  std::vector<SlopeRow> out;
  std::vector<std::string> strategies;
  for (const AggregateRow& a : aggregates)
    if (std::find(strategies.begin(), strategies.end(), a.strategy) == strategies.end())
      strategies.push_back(a.strategy);
  for (const std::string& s : strategies) {
    VecD lx, ly;
    for (const AggregateRow& a : aggregates)
      if (a.strategy == s && std::isfinite(a.median_l2q) && a.median_l2q > 0.0) {
        lx.push_back(std::log(static_cast<double>(a.n)));
        ly.push_back(std::log(a.median_l2q));
      }
    if (lx.size() < 2) continue;
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    SlopeRow row;
    row.strategy = s;
    row.slope = sxy / sxx;
    double sse = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      const double e = ly[i] - my - row.slope * (lx[i] - mx);
      sse += e * e;
    }
    row.se = lx.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
    out.push_back(row);
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const std::string rows_path = cfg.out_dir + "/rows.csv";
  std::ofstream csv(rows_path);
  if (!csv) throw ValidationError("cannot write " + rows_path);
  csv << "schema_version,strategy,n_p,n_q,replicate,seed,param_error,l2q_error,l2q_se,"
         "assignment_correct,failed,reason,wall_ms\n";

  ExperimentReport report;
  for (const std::string& strategy : cfg.strategies) {
    for (const std::int64_t n : cfg.n_grid) {
      std::vector<StrategyReport> group(cfg.replicates);
      const bool parallel = cfg.exec == Exec::Parallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
      for (int r = 0; r < cfg.replicates; ++r)
        group[r] = run_strategy_once(cfg, strategy, n, r);
      // rows appended in replicate order regardless of completion order
      for (const StrategyReport& row : group) {
        csv << kReportSchemaVersion << "," << row.strategy << "," << row.n_p << "," << row.n_q
            << "," << row.replicate << "," << row.seed << ","
            << (std::isfinite(row.param_error) ? fmt(row.param_error) : "") << ","
            << (std::isfinite(row.l2q_error) ? fmt(row.l2q_error) : "") << ","
            << (std::isfinite(row.l2q_se) ? fmt(row.l2q_se) : "") << ","
            << (row.assignment_correct >= 0 ? std::to_string(row.assignment_correct) : "")
            << "," << (row.failed ? 1 : 0) << "," << row.reason << "," << fmt(row.wall_ms)
            << "\n";
        report.rows.push_back(row);
      }
      csv.flush();
    }
  }
  report.aggregates = aggregate_rows(report.rows);
  report.slopes = fit_slopes(report.aggregates);
  write_aggregates_csv(report.aggregates, cfg.out_dir + "/aggregates.csv");
  write_slopes_csv(report.slopes, cfg.out_dir + "/slopes.csv");
  emit_plots(report, cfg.out_dir);
  return report;
}

void write_rows_csv(const std::vector<StrategyReport>& rows, const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw ValidationError("cannot write " + path);
  csv << "schema_version,strategy,n_p,n_q,replicate,seed,param_error,l2q_error,l2q_se,"
         "assignment_correct,failed,reason,wall_ms\n";
  for (const StrategyReport& row : rows) {
    csv << kReportSchemaVersion << "," << row.strategy << "," << row.n_p << "," << row.n_q << ","
        << row.replicate << "," << row.seed << ","
        << (std::isfinite(row.param_error) ? fmt(row.param_error) : "") << ","
        << (std::isfinite(row.l2q_error) ? fmt(row.l2q_error) : "") << ","
        << (std::isfinite(row.l2q_se) ? fmt(row.l2q_se) : "") << ","
        << (row.assignment_correct >= 0 ? std::to_string(row.assignment_correct) : "") << ","
        << (row.failed ? 1 : 0) << "," << row.reason << "," << fmt(row.wall_ms) << "\n";
  }
}

std::vector<StrategyReport> read_rows_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty");
  std::vector<StrategyReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 13) cells.push_back("");
    StrategyReport r;
    r.strategy = cells[1];
    r.n_p = std::stoll(cells[2]);
    r.n_q = std::stoll(cells[3]);
    r.replicate = std::stoi(cells[4]);
    r.seed = std::stoull(cells[5]);
    r.param_error = cells[6].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[6]);
    r.l2q_error = cells[7].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[7]);
    r.l2q_se = cells[8].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[8]);
    r.assignment_correct = cells[9].empty() ? -1 : std::stoi(cells[9]);
    r.failed = cells[10] == "1";
    r.reason = cells[11];
    r.wall_ms = cells[12].empty() ? 0.0 : std::stod(cells[12]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_aggregates_csv(const std::vector<AggregateRow>& rows, const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw ValidationError("cannot write " + path);
  csv << "schema_version,strategy,n,median_l2q,iqr_l2q,median_param,iqr_param,failures,"
         "assignment_correct,assignment_total\n";
  for (const AggregateRow& a : rows) {
    csv << kReportSchemaVersion << "," << a.strategy << "," << a.n << ","
        << (std::isfinite(a.median_l2q) ? fmt(a.median_l2q) : "") << ","
        << (std::isfinite(a.iqr_l2q) ? fmt(a.iqr_l2q) : "") << ","
        << (std::isfinite(a.median_param) ? fmt(a.median_param) : "") << ","
        << (std::isfinite(a.iqr_param) ? fmt(a.iqr_param) : "") << "," << a.failures << ","
        << a.assignment_correct_count << "," << a.assignment_total << "\n";
  }
}

void write_slopes_csv(const std::vector<SlopeRow>& rows, const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw ValidationError("cannot write " + path);
  csv << "schema_version,strategy,slope,se\n";
  for (const SlopeRow& s : rows)
    csv << kReportSchemaVersion << "," << s.strategy << "," << fmt(s.slope) << "," << fmt(s.se)
        << "\n";
}

namespace {

const char* kPalette[] = {"#1f6feb", "#d2452c", "#2da44e", "#8250df", "#bf8700"};

struct SvgCanvas {
  std::ostringstream body;
  int width = 640, height = 480;

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double w = 1.0) {
    body << "<line x1=\"" << fmt_short(x1) << "\" y1=\"" << fmt_short(y1) << "\" x2=\""
         << fmt_short(x2) << "\" y2=\"" << fmt_short(y2) << "\" stroke=\"" << color
         << "\" stroke-width=\"" << fmt_short(w) << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "start") {
    body << "<text x=\"" << fmt_short(x) << "\" y=\"" << fmt_short(y) << "\" font-size=\""
         << size << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s
         << "</text>\n";
  }
  void circle(double x, double y, double r, const std::string& color) {
    body << "<circle cx=\"" << fmt_short(x) << "\" cy=\"" << fmt_short(y) << "\" r=\""
         << fmt_short(r) << "\" fill=\"" << color << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& color) {
    body << "<rect x=\"" << fmt_short(x) << "\" y=\"" << fmt_short(y) << "\" width=\""
         << fmt_short(w) << "\" height=\"" << fmt_short(h) << "\" fill=\"" << color << "\"/>\n";
  }
  void save(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
  }
};

void loglog_plot(const ExperimentReport& report, bool param_metric, const std::string& title,
                 const std::string& path) {
  std::vector<std::string> strategies;
  for (const AggregateRow& a : report.aggregates)
    if (std::find(strategies.begin(), strategies.end(), a.strategy) == strategies.end())
      strategies.push_back(a.strategy);

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto value = [&](const AggregateRow& a) { return param_metric ? a.median_param : a.median_l2q; };
  for (const AggregateRow& a : report.aggregates) {
    const double v = value(a);
    if (!std::isfinite(v) || v <= 0.0) continue;
    xmin = std::min(xmin, std::log10(static_cast<double>(a.n)));
    xmax = std::max(xmax, std::log10(static_cast<double>(a.n)));
    ymin = std::min(ymin, std::log10(v));
    ymax = std::max(ymax, std::log10(v));
  }
  SvgCanvas svg;
  if (xmin > xmax) {  // nothing positive to draw
    svg.text(40, 40, title + " (no positive data)");
    svg.save(path);
    return;
  }
  if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
  const double L = 70, R = 620, T = 50, B = 430;
  auto px = [&](double lx) { return L + (lx - xmin) / (xmax - xmin) * (R - L); };
  auto py = [&](double ly) { return B - (ly - ymin) / (ymax - ymin) * (B - T); };
  svg.line(L, B, R, B, "#333");
  svg.line(L, T, L, B, "#333");
  svg.text(320, 470, "n (log scale)", 13, "middle");
  svg.text(14, 240, param_metric ? "median param error" : "median L2(Q) error", 13, "middle");
  svg.text(320, 24, title, 14, "middle");
  // x ticks at observed n values; y ticks at integer decades
  std::vector<std::int64_t> ns;
  for (const AggregateRow& a : report.aggregates)
    if (std::find(ns.begin(), ns.end(), a.n) == ns.end()) ns.push_back(a.n);
  std::sort(ns.begin(), ns.end());
  for (std::int64_t n : ns) {
    const double x = px(std::log10(static_cast<double>(n)));
    svg.line(x, B, x, B + 5, "#333");
    svg.text(x, B + 20, std::to_string(n), 11, "middle");
  }
  for (int dec = static_cast<int>(std::floor(ymin)); dec <= static_cast<int>(std::ceil(ymax));
       ++dec) {
    if (dec < ymin - 1e-9 || dec > ymax + 1e-9) continue;
    const double y = py(dec);
    svg.line(L - 5, y, L, y, "#333");
    svg.text(L - 8, y + 4, "1e" + std::to_string(dec), 11, "end");
  }
  int ci = 0;
  double legend_y = T + 10;
  for (const std::string& s : strategies) {
    const std::string color = kPalette[ci % 5];
    std::vector<std::pair<double, double>> pts;
    for (const AggregateRow& a : report.aggregates) {
      const double v = value(a);
      if (a.strategy != s || !std::isfinite(v) || v <= 0.0) continue;
      pts.emplace_back(px(std::log10(static_cast<double>(a.n))), py(std::log10(v)));
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      svg.line(pts[i].first, pts[i].second, pts[i + 1].first, pts[i + 1].second, color, 2.0);
    for (const auto& [x, y] : pts) svg.circle(x, y, 3.5, color);
    std::string label = s;
    if (!param_metric && pts.size() >= 2)
      for (const SlopeRow& sl : report.slopes)
        if (sl.strategy == s) label += " (slope " + fmt_short(sl.slope) + ")";
    svg.rect(R - 170, legend_y - 9, 12, 12, color);
    svg.text(R - 152, legend_y + 2, label, 12);
    legend_y += 18;
    ++ci;
  }
  svg.save(path);
}

void final_bar_plot(const ExperimentReport& report, const std::string& path) {
  std::int64_t nmax = 0;
  for (const AggregateRow& a : report.aggregates) nmax = std::max(nmax, a.n);
  std::vector<std::pair<std::string, double>> bars;
  for (const AggregateRow& a : report.aggregates)
    if (a.n == nmax && std::isfinite(a.median_l2q)) bars.emplace_back(a.strategy, a.median_l2q);
  SvgCanvas svg;
  svg.text(320, 24, "median L2(Q) error at n = " + std::to_string(nmax), 14, "middle");
  if (bars.empty()) {
    svg.save(path);
    return;
  }
  double vmax = 0.0;
  for (const auto& [s, v] : bars) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;
  const double L = 70, R = 620, T = 60, B = 420;
  const double bw = (R - L) / (2.0 * bars.size());
  svg.line(L, B, R, B, "#333");
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = L + (2 * i + 0.5) * bw;
    const double h = bars[i].second / vmax * (B - T);
    svg.rect(x, B - h, bw, h, kPalette[i % 5]);
    svg.text(x + bw / 2, B + 18, bars[i].first, 12, "middle");
    svg.text(x + bw / 2, B - h - 6, fmt_short(bars[i].second), 11, "middle");
  }
  svg.save(path);
}

}  // namespace

void emit_plots(const ExperimentReport& report, const std::string& out_dir) {
  if (report.rows.empty()) throw ValidationError("emit_plots: empty report");
  std::filesystem::create_directories(out_dir);
  loglog_plot(report, false, "L2(Q) error vs sample size", out_dir + "/l2q_vs_n.svg");
  loglog_plot(report, true, "parameter error vs sample size", out_dir + "/param_vs_n.svg");
  final_bar_plot(report, out_dir + "/final_n_bars.svg");
}

}  // namespace w2s

#include "w2s/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace w2s {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_vec(const VecD& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::string fmt_mat(const VecList& m) {
  std::string s = "[";
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? ", " : "") + fmt_vec(m[i]);
  return s + "]";
}

ExpertParams experts_from_table(const toml::Table& t, const std::string& section) {
  ExpertParams e;
  e.beta = t.get_matrix(section + ".beta");
  e.noise_sd = t.get_double(section + ".noise_sd");
  return e;
}

}  // namespace

LatentConceptSystem system_from_table(const toml::Table& t) {
  LatentConceptSystem sys;
  sys.k = static_cast<int>(t.get_int("system.k"));
  sys.x_dim = static_cast<int>(t.get_int("system.x_dim"));
  sys.pi_p = t.get_vector("system.pi_p");
  sys.pi_q = t.get_vector("system.pi_q");
  sys.x_law.scale = t.get_double("system.x_scale", 1.0);
  sys.gating.kind = gating_kind_from_string(t.get_string("gating.kind", "constant"));
  if (sys.gating.kind == GatingKind::Gaussian) {
    sys.gating.variance = t.get_double("gating.variance", 1.0);
    sys.gating.eta = t.get_matrix("gating.eta");
  }
  sys.strong = experts_from_table(t, "experts.strong");
  sys.weak_p = experts_from_table(t, "experts.weak_p");
  sys.weak_q = experts_from_table(t, "experts.weak_q");
  sys.validate();
  return sys;
}

LatentConceptSystem load_system(const std::string& path) {
  return system_from_table(toml::Table::parse_file(path));
}

void save_system(const LatentConceptSystem& sys, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write system file: " + path);
  out << "[system]\n";
  out << "k = " << sys.k << "\n";
  out << "x_dim = " << sys.x_dim << "\n";
  out << "pi_p = " << fmt_vec(sys.pi_p) << "\n";
  out << "pi_q = " << fmt_vec(sys.pi_q) << "\n";
  out << "x_scale = " << fmt(sys.x_law.scale) << "\n\n";
  out << "[gating]\n";
  out << "kind = \"" << to_string(sys.gating.kind) << "\"\n";
  if (sys.gating.kind == GatingKind::Gaussian) {
    out << "variance = " << fmt(sys.gating.variance) << "\n";
    out << "eta = " << fmt_mat(sys.gating.eta) << "\n";
  }
  for (const auto& [name, e] :
       {std::pair<const char*, const ExpertParams*>{"strong", &sys.strong},
        {"weak_p", &sys.weak_p},
        {"weak_q", &sys.weak_q}}) {
    out << "\n[experts." << name << "]\n";
    out << "beta = " << fmt_mat(e->beta) << "\n";
    out << "noise_sd = " << fmt(e->noise_sd) << "\n";
  }
}

HMMMixture hmm_from_table(const toml::Table& t) {
  HMMMixture mix;
  mix.pi = t.get_vector("hmm.pi");
  const auto transitions = t.get_matrix_list("hmm.transitions");
  if (transitions.empty()) throw ValidationError("hmm.transitions: need at least one matrix");
  const int h = static_cast<int>(transitions[0].size());
  VecD start = t.has("hmm.start") ? t.get_vector("hmm.start") : VecD(h, 1.0 / h);
  for (const VecList& m : transitions) {
    HMMParams p;
    p.n_states = h;
    p.start = start;
    for (const VecD& row : m) {
      if (static_cast<int>(row.size()) != h)
        throw ValidationError("hmm.transitions: matrices must be square and same size");
      p.transition.insert(p.transition.end(), row.begin(), row.end());
    }
    if (static_cast<int>(m.size()) != h)
      throw ValidationError("hmm.transitions: matrices must be square");
    mix.components.push_back(std::move(p));
  }
  auto emission = [&](const std::string& key) {
    const VecList m = t.get_matrix(key);
    EmissionParams e;
    e.n_states = static_cast<int>(m.size());
    e.n_tokens = m.empty() ? 0 : static_cast<int>(m[0].size());
    for (const VecD& row : m) {
      if (static_cast<int>(row.size()) != e.n_tokens)
        throw ValidationError(key + ": ragged rows");
      e.emission.insert(e.emission.end(), row.begin(), row.end());
    }
    return e;
  };
  mix.emission_x = emission("hmm.emission_x");
  mix.emission_y = emission("hmm.emission_y");
  mix.validate();
  return mix;
}

HMMMixture load_hmm(const std::string& path) {
  return hmm_from_table(toml::Table::parse_file(path));
}

EMConfig em_config_from_table(const toml::Table& t, const std::string& prefix) {
  EMConfig cfg;
  cfg.max_iters = static_cast<int>(t.get_int(prefix + ".max_iters", cfg.max_iters));
  cfg.tol = t.get_double(prefix + ".tol", cfg.tol);
  cfg.restarts = static_cast<int>(t.get_int(prefix + ".restarts", cfg.restarts));
  const std::string init = t.get_string(prefix + ".init", "kmeanspp");
  if (init == "kmeanspp")
    cfg.init = EMConfig::Init::KMeansPP;
  else if (init == "random")
    cfg.init = EMConfig::Init::Random;
  else
    throw ValidationError(prefix + ".init: expected 'kmeanspp' or 'random'");
  cfg.ridge = t.get_double(prefix + ".ridge", cfg.ridge);
  cfg.seed = static_cast<std::uint64_t>(t.get_int(prefix + ".seed", 0));
  return cfg;
}

ExperimentConfig experiment_from_table(const toml::Table& t, const std::string& config_dir) {
  ExperimentConfig cfg;
  cfg.system_path = t.get_string("experiment.system");
  std::filesystem::path sp(cfg.system_path);
  if (sp.is_relative()) sp = std::filesystem::path(config_dir) / sp;
  cfg.system = load_system(sp.string());
  cfg.strategies = t.get_string_list("experiment.strategies");
  cfg.n_grid = t.get_int_list("experiment.n_grid");
  cfg.replicates = static_cast<int>(t.get_int("experiment.replicates", 1));
  cfg.base_seed = static_cast<std::uint64_t>(t.get_int("experiment.base_seed", 0));
  cfg.out_dir = t.get_string("experiment.out_dir", "out");
  cfg.mc_points = static_cast<std::size_t>(t.get_int("experiment.mc_points", 4000));
  cfg.em = em_config_from_table(t, "em");
  cfg.em.gating_kind = cfg.system.gating.kind;
  cfg.em.gating_variance = cfg.system.gating.variance;
  cfg.weak_train.lambda = t.get_double("weak_train.lambda", 1.0);
  cfg.weak_train.k_fit = static_cast<int>(t.get_int("weak_train.k_fit", cfg.system.k));
  cfg.weak_train.em = cfg.em;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return experiment_from_table(toml::Table::parse_file(path), dir.empty() ? "." : dir);
}

namespace {

void write_matrix_csv(std::ofstream& out, const std::vector<double>& x, int d,
                      const VecD* col1, const VecD* col2, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < d; ++t) {
      if (t) out << ",";
      out << fmt(x[i * static_cast<std::size_t>(d) + t]);
    }
    if (col1) out << "," << fmt((*col1)[i]);
    if (col2) out << "," << fmt((*col2)[i]);
    out << "\n";
  }
}

std::vector<VecD> read_csv_rows(const std::string& path, std::string& header) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset: " + path);
  if (!std::getline(in, header)) throw ValidationError(path + ": empty file");
  std::vector<VecD> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    VecD row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        throw ValidationError(path + ": bad numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path + ": no data rows");
  return rows;
}

int header_x_dim(const std::string& header, const std::string& path, bool with_y) {
  std::stringstream ss(header);
  std::string cell;
  int d = 0;
  std::vector<std::string> cols;
  while (std::getline(ss, cell, ',')) cols.push_back(cell);
  for (const std::string& c : cols)
    if (c.rfind("x_", 0) == 0) ++d;
  const std::size_t expected = static_cast<std::size_t>(d) + (with_y ? 2 : 1);
  if (d == 0 || cols.size() != expected || cols.back() != "y_weak" ||
      (with_y && cols[cols.size() - 2] != "y"))
    throw ValidationError(path + ": unexpected header '" + header + "'");
  return d;
}

}  // namespace

void write_source_csv(const SourceDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dataset: " + path);
  for (int t = 0; t < ds.x_dim; ++t) out << "x_" << t << ",";
  out << "y,y_weak\n";
  write_matrix_csv(out, ds.x, ds.x_dim, &ds.y, &ds.y_weak, ds.n());
}

void write_target_csv(const TargetDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dataset: " + path);
  for (int t = 0; t < ds.x_dim; ++t) out << "x_" << t << ",";
  out << "y_weak\n";
  write_matrix_csv(out, ds.x, ds.x_dim, nullptr, &ds.y_weak, ds.n());
}

SourceDataset read_source_csv(const std::string& path) {
  std::string header;
  const auto rows = read_csv_rows(path, header);
  SourceDataset ds;
  ds.x_dim = header_x_dim(header, path, /*with_y=*/true);
  for (const VecD& r : rows) {
    if (static_cast<int>(r.size()) != ds.x_dim + 2)
      throw ValidationError(path + ": row width mismatch");
    ds.x.insert(ds.x.end(), r.begin(), r.begin() + ds.x_dim);
    ds.y.push_back(r[ds.x_dim]);
    ds.y_weak.push_back(r[ds.x_dim + 1]);
  }
  return ds;
}

TargetDataset read_target_csv(const std::string& path) {
  std::string header;
  const auto rows = read_csv_rows(path, header);
  TargetDataset ds;
  ds.x_dim = header_x_dim(header, path, /*with_y=*/false);
  for (const VecD& r : rows) {
    if (static_cast<int>(r.size()) != ds.x_dim + 1)
      throw ValidationError(path + ": row width mismatch");
    ds.x.insert(ds.x.end(), r.begin(), r.begin() + ds.x_dim);
    ds.y_weak.push_back(r[ds.x_dim]);
  }
  return ds;
}

std::string fitted_mixture_to_json(const FittedMixture& fit) {
  nlohmann::json j;
  j["pi_hat"] = fit.pi_hat;
  if (fit.eta_hat) j["eta_hat"] = *fit.eta_hat;
  if (fit.beta_strong) j["beta_strong"] = *fit.beta_strong;
  j["beta_weak"] = fit.beta_weak;
  j["sigma_hat"] = fit.sigma_hat;
  j["loglik"] = fit.loglik;
  j["n_iters"] = fit.n_iters;
  j["restarts_used"] = fit.restarts_used;
  j["converged"] = fit.converged;
  j["gating_kind"] = to_string(fit.gating_kind);
  j["gating_variance"] = fit.gating_variance;
  return j.dump(2);
}

FittedMixture fitted_mixture_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  FittedMixture fit;
  fit.pi_hat = j.at("pi_hat").get<VecD>();
  if (j.contains("eta_hat")) fit.eta_hat = j.at("eta_hat").get<VecList>();
  if (j.contains("beta_strong")) fit.beta_strong = j.at("beta_strong").get<VecList>();
  fit.beta_weak = j.at("beta_weak").get<VecList>();
  fit.sigma_hat = j.at("sigma_hat").get<double>();
  fit.loglik = j.at("loglik").get<double>();
  fit.n_iters = j.at("n_iters").get<int>();
  fit.restarts_used = j.at("restarts_used").get<int>();
  fit.converged = j.at("converged").get<bool>();
  fit.gating_kind = gating_kind_from_string(j.at("gating_kind").get<std::string>());
  fit.gating_variance = j.at("gating_variance").get<double>();
  return fit;
}

}  // namespace w2s

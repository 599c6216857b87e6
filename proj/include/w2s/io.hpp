// Config-file and dataset serialization: TOML-syntax system/HMM/experiment
// files, CSV datasets, JSON fit reports.

#pragma once

#include <string>

#include "w2s/em.hpp"
#include "w2s/harness.hpp"
#include "w2s/hmm.hpp"
#include "w2s/system.hpp"
#include "w2s/toml.hpp"

namespace w2s {

LatentConceptSystem system_from_table(const toml::Table& t);
LatentConceptSystem load_system(const std::string& path);
void save_system(const LatentConceptSystem& sys, const std::string& path);

HMMMixture hmm_from_table(const toml::Table& t);
HMMMixture load_hmm(const std::string& path);

ExperimentConfig experiment_from_table(const toml::Table& t, const std::string& config_dir);
ExperimentConfig load_experiment(const std::string& path);

EMConfig em_config_from_table(const toml::Table& t, const std::string& prefix = "em");

// Dataset CSV: header `x_0,...,x_{d-1},y,y_weak` (source) or
// `x_0,...,x_{d-1},y_weak` (target); values round-trip exactly.
void write_source_csv(const SourceDataset& ds, const std::string& path);
void write_target_csv(const TargetDataset& ds, const std::string& path);
SourceDataset read_source_csv(const std::string& path);
TargetDataset read_target_csv(const std::string& path);

std::string fitted_mixture_to_json(const FittedMixture& fit);
FittedMixture fitted_mixture_from_json(const std::string& text);

}  // namespace w2s

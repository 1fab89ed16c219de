#pragma once

// Experiment runner: config -> output directory of CSV files.
//
// Every run directory holds config.yaml, mdp.bin (instance 0) and theory.csv;
// the experiment kind adds logs/*.csv, gpi_effect.csv, transfer.csv,
// merged.csv, rates.csv or w_full_batch.csv.

#include <filesystem>
#include <string>
#include <vector>

#include "sfdqn/config.hpp"

namespace sfdqn {

struct PresetInfo {
  std::string name;
  std::string description;
  std::string yaml;
};

const std::vector<PresetInfo>& presets();
/// Throws ValidationError for an unknown name.
const PresetInfo& find_preset(const std::string& name);
ExperimentConfig preset_config(const std::string& name);

/// Writes all outputs into out_dir (created if missing). Returns the files written, relative to out_dir.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct VerifyReport {
  std::vector<std::string> passed;
  std::vector<std::string> failed;
  bool ok() const { return failed.empty(); }
};

/// Re-checks stored outputs: MDP archive invariants, CSV schema and value ranges, bound soundness.
VerifyReport verify_run(const std::filesystem::path& dir);

/// Seeds derived from the experiment root.
std::uint64_t run_seed(const ExperimentConfig& cfg, std::string_view stream, std::size_t index);

}  // namespace sfdqn

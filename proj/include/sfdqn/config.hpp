#pragma once

// Experiment configuration (YAML). Unknown keys are rejected with the line of
// the offending key.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfdqn/error.hpp"
#include "sfdqn/mdp.hpp"
#include "sfdqn/trainer.hpp"

namespace sfdqn {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class ExperimentKind { training, init_sweep, gpi_effect, transfer, theory };
const char* to_string(ExperimentKind k);

struct SweepSpec {
  std::string field = "w_init_radius";  // or theta_init_radius
  std::vector<double> values;
};

struct TheorySpec {
  bool hessian = false;
  double fd_step = 1e-5;
  std::size_t jitter_attempts = 8;     // fresh instances tried when the Hessian probe sits near a kink
  std::size_t full_batch_transitions = 200;
  std::size_t full_batch_iterations = 400;
};

struct ExperimentConfig {
  std::string name = "custom";
  std::string description;
  ExperimentKind kind = ExperimentKind::training;
  std::uint64_t seed = 1;
  MdpConfig env;
  TrainerConfig trainer;
  TrainerConfig source;  // gpi_effect source task; defaults to trainer
  TrainerConfig dqn;     // transfer baseline; defaults to trainer
  std::size_t n_tasks = 1;
  std::vector<double> distances;  // perturbations of task 0 (tasks 1.. for training, sweep axis for gpi_effect)
  bool train_target = false;
  std::size_t seeds = 1;
  std::optional<SweepSpec> sweep;
  TheorySpec theory;
  std::string output;  // optional default output directory

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Canonical YAML text for a config. parse_config(to_yaml(c)) reproduces c.
std::string to_yaml(const ExperimentConfig& c);

}  // namespace sfdqn

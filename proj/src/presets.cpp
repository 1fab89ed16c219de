#include "sfdqn/error.hpp"
#include "sfdqn/experiment.hpp"

namespace sfdqn {

namespace {

// Desk-scale defaults shared by the presets: 50 states, 4 actions, d_phi = 4,
// two hidden layers of 16 units per trunk.
const char* const kTable2 = R"yaml(name: table2_desk
description: "Normalized return with and without GPI against ||w1* - w2*||"
kind: gpi_effect
seed: 2024
env: {n_states: 50, n_actions: 4, d_phi: 4, widths: [8, 16, 16], gamma: 0.9}
trainer:
  iterations: 1500
  batch_size: 32
  buffer_capacity: 10000
  eta: {schedule: inverse_time, base: 0.5, offset: 10}
  kappa: auto
  policy: {kind: epsilon_greedy, epsilon_start: 1.0, epsilon_end: 0.05, decay_fraction: 0.2}
  theta_init_radius: fresh
  eval_every: 50
source:
  theta_init_radius: 0.1
tasks: {distances: [0.01, 0.1, 1, 10]}
eval: {seeds: 5}
)yaml";

const char* const kFig1 = R"yaml(name: fig1_init
description: "Training curves for initial reward mappings at distance 0.01, 0.1, 0.5 from w1*"
kind: init_sweep
seed: 11
env: {n_states: 50, n_actions: 4, d_phi: 4, widths: [8, 16, 16], gamma: 0.9}
trainer:
  iterations: 2000
  batch_size: 32
  buffer_capacity: 10000
  eta: {schedule: inverse_time, base: 0.5, offset: 10}
  kappa: auto
  policy: {kind: epsilon_greedy, epsilon_start: 1.0, epsilon_end: 0.05, decay_fraction: 0.2}
  theta_init_radius: 0.1
  eval_every: 20
sweep: {field: w_init_radius, values: [0.01, 0.1, 0.5]}
eval: {seeds: 1}
)yaml";

const char* const kTransfer = R"yaml(name: fig_transfer_sf_vs_dqn
description: "Zero-shot transfer of SF-DQN and DQN from task 1 to a perturbed task 2, then training on task 2"
kind: transfer
seed: 7
env: {n_states: 50, n_actions: 4, d_phi: 4, widths: [8, 16, 16], gamma: 0.9}
trainer:
  iterations: 1500
  batch_size: 32
  buffer_capacity: 10000
  eta: {schedule: inverse_time, base: 0.5, offset: 10}
  kappa: auto
  policy: {kind: epsilon_greedy, epsilon_start: 1.0, epsilon_end: 0.05, decay_fraction: 0.2}
  theta_init_radius: fresh
  eval_every: 50
tasks: {distances: [0.5], train_target: true}
eval: {seeds: 5}
)yaml";

const char* const kThm1 = R"yaml(name: thm1_rates
description: "Convergence of Theta and w on the planted task with eta_t = 1/(t+1)"
kind: training
seed: 3
env: {n_states: 50, n_actions: 4, d_phi: 4, widths: [8, 1], gamma: 0.5}
trainer:
  iterations: 5000
  batch_size: 32
  buffer_capacity: 10000
  eta: {schedule: inverse_time, base: 1.0, offset: 0}
  kappa: auto
  policy: {kind: epsilon_greedy, epsilon_start: 0.5, epsilon_end: 0.5, decay_fraction: 0}
  theta_init_radius: 0.1
  eval_every: 10
eval: {seeds: 5}
)yaml";

const char* const kLemma = R"yaml(name: lemma_convexity
description: "Finite-difference Hessian spectrum of the population Bellman error at Theta* on a tiny instance"
kind: theory
seed: 5
env: {n_states: 12, n_actions: 3, d_phi: 2, widths: [2, 4], gamma: 0.9}
theory: {hessian: true, fd_step: 1.0e-5, jitter_attempts: 64, full_batch_transitions: 200, full_batch_iterations: 400}
)yaml";

}  // namespace

const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> list = [] {
    std::vector<PresetInfo> v;
    for (const char* yaml : {kTable2, kFig1, kTransfer, kThm1, kLemma}) {
      const ExperimentConfig c = parse_config(yaml, "<preset>");
      v.push_back(PresetInfo{c.name, c.description, yaml});
    }
    return v;
  }();
  return list;
}

const PresetInfo& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ValidationError("unknown preset '" + name + "' (available: " + known + ")");
}

ExperimentConfig preset_config(const std::string& name) {
  return parse_config(find_preset(name).yaml, "preset:" + name);
}

}  // namespace sfdqn

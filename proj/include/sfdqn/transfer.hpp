#pragma once

// Zero-shot transfer and its bounds.
//
// SF transfer:  Q(s,a) = max_j psi(Theta_j; s, a)^T w_target
// DQN transfer: Q(s,a) = max_j Q(omega_j; s, a)
// Both are scored by the greedy policy's true value: sup |Q* - Q^pi|.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"
#include "sfdqn/trainer.hpp"

namespace sfdqn {

QTable sf_transfer_q(std::span<const NetworkParams> sfs, const VectorRef& w_target, const SyntheticMdp& mdp);

/// sup_{s,a} |Q*(s,a) - Q^{pi}(s,a)| for pi greedy in q_est, under reward phi^T w_target.
double transfer_error(const QTable& q_est, const VectorRef& w_target, const SyntheticMdp& mdp);
double transfer_error(const QTable& q_est, const VectorRef& w_target, const SyntheticMdp& mdp, const QTable& q_opt);

/// sup_{s,a} ||psi(Theta; s, a) - psi_true(s, a)||_2 against a tabulated SF.
double sf_sup_error(const NetworkParams& theta, const Eigen::MatrixXd& psi_true, const SyntheticMdp& mdp);

/// min_j ||w_j - w_target||_2 over source task ids.
double min_task_distance(const SyntheticMdp& mdp, std::span<const std::size_t> sources, std::size_t target);

/// 2 gamma/(1-gamma) phi_max d_min + psi_err ||w|| (1 + gamma/(1-gamma)).
double thm3_bound(double gamma, double phi_max, double min_distance, double psi_err, double w_norm);
/// As thm3_bound with first-term coefficient 2/(1-gamma).
double thm4_bound(double gamma, double phi_max, double min_distance, double psi_err, double w_norm);
double thm3_bound(const SyntheticMdp& mdp, std::span<const std::size_t> sources, std::size_t target, double psi_err);
double thm4_bound(const SyntheticMdp& mdp, std::span<const std::size_t> sources, std::size_t target, double psi_err);

/// Task relevance (1+gamma) R_max/(1-gamma) * d_min / ||Theta^(0) - Theta*||.
double q_star(double gamma, double r_max, double min_distance, double theta_init_distance);
double q_star(const SyntheticMdp& mdp, std::span<const std::size_t> prior_tasks, std::size_t new_task,
              double theta_init_distance);

// ---- experiments -------------------------------------------------------------

/// Instance i uses an MDP generated with env.seed = derive_seed(root_seed, "env", i).
MdpConfig instance_config(const MdpConfig& env, std::uint64_t root_seed, std::size_t instance);

struct GpiEffectConfig {
  MdpConfig env;
  std::vector<double> distances{0.01, 0.1, 1.0, 10.0};
  std::size_t seeds = 5;
  TrainerConfig source;  // task 0
  TrainerConfig target;  // task 1; use_gpi is overridden per arm
  std::uint64_t root_seed = 1;
};

struct GpiEffectRow {
  double distance = 0.0;
  double realized_distance = 0.0;  // mean over seeds, after renormalization
  double with_gpi_mean = 0.0, with_gpi_std = 0.0;
  double without_gpi_mean = 0.0, without_gpi_std = 0.0;
  double zero_shot_mean = 0.0;  // GPI over the source network with the true target mapping, before training
  std::size_t seeds = 0;
};

/// Mean normalized return over the target task's evaluation checkpoints, with and without GPI.
std::vector<GpiEffectRow> gpi_effect_table(const GpiEffectConfig& cfg);

struct TransferConfig {
  MdpConfig env;
  double distance = 0.5;  // target = renormalized perturbation of task 0
  std::size_t seeds = 5;
  TrainerConfig sf;
  TrainerConfig dqn;
  bool train_target = false;  // also train both agents on the target with the source as GPI prior
  std::uint64_t root_seed = 1;
};

struct TransferRow {
  std::size_t instance = 0;
  double distance = 0.0;          // realized ||w_source - w_target||
  double sf_transfer_error = 0.0;
  double dqn_transfer_error = 0.0;
  double psi_error = 0.0;         // sup ||psi(Theta_source) - psi*||
  double dqn_q_error = 0.0;       // sup |Q(omega_source) - Q*_source|
  double thm3_bound = 0.0;
  double thm4_bound = 0.0;
  double q_star = 0.0;
  double sf_return = 0.0;   // normalized return of the zero-shot greedy policy
  double dqn_return = 0.0;
};

struct TransferResult {
  std::vector<TransferRow> rows;
  std::vector<TrainingLog> target_logs;  // sf then dqn per instance, when train_target
};

TransferResult transfer_experiment(const TransferConfig& cfg);

void write_gpi_effect_csv(std::ostream& out, const std::vector<GpiEffectRow>& rows, const std::string& config_echo);
void write_transfer_csv(std::ostream& out, const std::vector<TransferRow>& rows, const std::string& config_echo);

}  // namespace sfdqn

#pragma once

// DQN baseline on the same input pathway: one scalar network Q(omega; x(s,a)).
// The scalar network is two trunks of the averaged-ReLU architecture with a
// fixed +1/-1 combination, Q = H(omega_+; x) - H(omega_-; x), so it can take
// negative values while keeping the fixed-head analysis of each trunk.
// Hidden widths are scaled so the parameter count matches the SF network.

#include <span>
#include <vector>

#include "sfdqn/kernels.hpp"
#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"
#include "sfdqn/trainer.hpp"

namespace sfdqn {

/// Two-trunk shape whose size is as close as possible to sf_shape.size().
NetworkShape dqn_shape(const NetworkShape& sf_shape);

double dqn_value(const NetworkParams& q_net, const VectorRef& x);
QTable dqn_q_table(const NetworkParams& q_net, const SyntheticMdp& mdp, Exec exec = Exec::parallel);

/// Pointwise max of member tables. Throws ValidationError on an empty list.
QTable dqn_gpi_q(std::span<const NetworkParams> q_nets, const SyntheticMdp& mdp, Exec exec = Exec::parallel);

NetworkParams dqn_initial(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg);

struct DqnResult {
  NetworkParams q_net;
  TrainingLog log;  // agent = "dqn"; theta_error = q_error, w_error = 0
};

/// Semi-gradient Q-learning with the trainer's schedule, replay and behavior policy.
/// Priors act through max_j Q_j in both behavior and the bootstrap action.
DqnResult dqn_train(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg,
                    std::span<const NetworkParams> priors = {});
DqnResult dqn_train(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg,
                    std::span<const NetworkParams> priors, NetworkParams q0);

}  // namespace sfdqn

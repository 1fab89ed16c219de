#pragma once

// SF-DQN training. Per iteration, on a mini-batch D_t drawn from replay:
//     w'     = w     - kappa_t * sum_m (phi_m^T w - r_m) phi_m
//     Theta' = Theta - eta_t   * sum_m (psi(Theta; s_m, a_m) - phi_m - gamma psi(Theta; s'_m, a'_m)) grad psi(Theta; s_m, a_m)
// with a'_m = argmax_a max_c psi(Theta_c; s'_m, a)^T w over the prior networks
// and the current one. The target is not differentiated (semi-gradient). Both
// updates use the pre-step (Theta, w).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfdqn/kernels.hpp"
#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"
#include "sfdqn/policy.hpp"

namespace sfdqn {

/// constant: base.  inverse_time: base / (t + 1 + offset), t = 0, 1, ...
struct StepSchedule {
  enum class Kind { constant, inverse_time };
  Kind kind = Kind::inverse_time;
  double base = 1.0;
  double offset = 0.0;

  double at(std::size_t t) const;
  void validate(const char* name) const;
};

struct TrainerConfig {
  std::size_t iterations = 2000;  // T per task
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 10000;
  StepSchedule eta;
  std::optional<double> kappa;  // constant; unset means 1 / (batch_size * phi_max^2)
  PolicySpec policy;
  std::optional<double> theta_init_radius = 0.1;  // every task starts in this ball around Theta*; unset means fresh random
  double init_scale = 1.0;                        // He scale of fresh initializations
  std::optional<double> w_init_radius;            // unset means w^(0) = 0
  bool use_gpi = true;
  std::size_t target_sync = 0;     // 0 bootstraps from the current network
  std::size_t episode_length = 0;  // 0 runs one continuing trajectory
  std::size_t eval_every = 1;      // table-based columns are refreshed at this period and at t = T
  std::uint64_t seed = 1;
  Exec exec = Exec::parallel;

  void validate() const;
  double kappa_for(const SyntheticMdp& mdp) const;
};

struct LogRow {
  std::size_t t = 0;
  double theta_error = 0.0;  // ||Theta - Theta*|| on the planted task, else equal to q_error
  double q_error = 0.0;      // sup |psi(Theta)^T w - Q*|
  double w_error = 0.0;
  double td_residual = 0.0;  // mean over the batch of ||psi - target||
  double policy_mismatch = 0.0;
  double normalized_return = 0.0;
  double cumulative_reward = 0.0;
};

struct TrainingLog {
  std::string agent = "sf";
  std::size_t task = 0;
  std::size_t eval_every = 1;  // rows with t % eval_every != 0 (except the last) carry table columns forward
  LogRow initial;             // before the first update
  std::vector<LogRow> rows;   // rows[t - 1] is the state after t updates

  std::vector<double> column(double LogRow::*field) const;
};

struct TrainResult {
  NetworkParams theta;
  Vector w;
  TrainingLog log;
};

/// Exact optimal Q table and return normalization of one task.
struct TaskOracle {
  QTable q_star;
  std::vector<std::size_t> policy;
  ReturnScale scale;

  static TaskOracle build(const SyntheticMdp& mdp, std::size_t task_id);
  /// Normalized return of the greedy policy of q (true reward of the oracle's task).
  double normalized_return_of(const SyntheticMdp& mdp, const VectorRef& w_true, const QTable& q) const;
  double sup_error(const QTable& q) const { return (q - q_star).cwiseAbs().maxCoeff(); }
};

/// Initial parameters train_task uses for a task.
NetworkParams initial_theta(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg);
Vector initial_w(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg);

/// In-place reward-mapping step on a batch. Returns the new w.
Vector w_update(const VectorRef& w, std::span<const Transition> batch, const SyntheticMdp& mdp, double kappa);

/// Prior networks tabulated once per task for GPI lookups.
class GpiSet {
 public:
  GpiSet() = default;
  GpiSet(std::span<const NetworkParams> priors, const SyntheticMdp& mdp, Exec exec = Exec::parallel);
  std::size_t size() const { return tables_.size(); }
  /// max over priors of psi_c(s,a)^T w, or -inf with no priors.
  double value(std::size_t pair, const VectorRef& w) const;
  const std::vector<Eigen::MatrixXd>& tables() const { return tables_; }

 private:
  std::vector<Eigen::MatrixXd> tables_;
};

/// One semi-gradient step on Theta. `bootstrap` evaluates the target (the current
/// network unless a target copy is in use). Writes the mean residual norm to td_residual.
NetworkParams theta_update(const NetworkParams& theta, std::span<const Transition> batch, const SyntheticMdp& mdp,
                           const VectorRef& w, const GpiSet& priors, double eta, const NetworkParams* bootstrap = nullptr,
                           double* td_residual = nullptr, Exec exec = Exec::parallel);

/// Sum over the batch of residual * grad psi (the quantity theta_update scales by eta).
std::vector<double> theta_semi_gradient(const NetworkParams& theta, std::span<const Transition> batch,
                                        const SyntheticMdp& mdp, const VectorRef& w, const GpiSet& priors,
                                        const NetworkParams& bootstrap, double* td_residual = nullptr,
                                        Exec exec = Exec::parallel);

TrainResult train_task(const SyntheticMdp& mdp, std::size_t task_id, std::span<const NetworkParams> prior_sfs,
                       const TrainerConfig& cfg);
TrainResult train_task(const SyntheticMdp& mdp, std::size_t task_id, std::span<const NetworkParams> prior_sfs,
                       const TrainerConfig& cfg, NetworkParams theta0, Vector w0);

/// Tasks in order; task i uses the final networks of tasks < i as GPI priors when cfg.use_gpi.
std::vector<TrainResult> train_sequence(const SyntheticMdp& mdp, const TrainerConfig& cfg);

/// Q(s,a) = psi(Theta; s, a)^T w.
QTable q_estimate(const NetworkParams& theta, const VectorRef& w, const SyntheticMdp& mdp, Exec exec = Exec::parallel);

/// Behavior Q table: max over priors and theta.
QTable gpi_q_table(std::span<const NetworkParams> sfs, const VectorRef& w, const SyntheticMdp& mdp,
                   Exec exec = Exec::parallel);

std::string describe(const TrainerConfig& cfg);

/// CSV: version line, "# key=value" header lines, column names, then t = 0..T.
void write_log_csv(std::ostream& out, const TrainingLog& log, const std::string& config_echo);

}  // namespace sfdqn

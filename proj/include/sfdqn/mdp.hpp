#pragma once

// Synthetic finite MDPs with a planted successor-feature network.
//
// generate() draws the transition kernel, state-action features and a random
// network Theta*, tabulates psi*(s,a) = forward_sf(Theta*, x(s,a)), takes the
// greedy policy a*(s) for the first reward mapping w*_0, and then defines the
// transition features pointwise as
//     phi(s,a,s') = psi*(s,a) - gamma * psi*(s', a*(s')),
// so the successor-feature Bellman identity holds exactly for task 0 and
// psi* is the optimal SF of that task.
//
// Task ids are 0-based; task 0 is the planted task.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfdqn/network.hpp"
#include "sfdqn/rng.hpp"

namespace sfdqn {

/// Q-value table, rows = states, columns = actions.
using QTable = Eigen::MatrixXd;

struct MdpConfig {
  std::size_t n_states = 50;
  std::size_t n_actions = 4;
  std::size_t d_phi = 4;
  NetworkShape net{{8, 16, 16}, 4};  // head_dim must equal d_phi
  double gamma = 0.9;
  std::size_t successors = 0;  // nonzero entries per transition row; 0 = dense
  std::uint64_t seed = 7;

  void validate() const;
};

struct TaskInfo {
  Vector w;
  std::optional<std::size_t> base;  // set for perturbed tasks
  double delta = 0.0;               // requested distance before renormalization
  double realized_distance = 0.0;   // ||w - w_base|| after renormalization
};

struct Transition {
  std::size_t s = 0;
  std::size_t a = 0;
  std::size_t s_next = 0;
  double reward = 0.0;
};

class SyntheticMdp {
 public:
  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t n_pairs() const { return n_states_ * n_actions_; }
  std::size_t d_phi() const { return d_phi_; }
  std::size_t d_in() const { return static_cast<std::size_t>(features_.cols()); }
  double gamma() const { return gamma_; }
  double phi_max() const { return phi_max_; }
  double r_max() const { return r_max_; }
  const MdpConfig& config() const { return config_; }

  std::size_t pair(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }

  double prob(std::size_t s, std::size_t a, std::size_t s_next) const {
    return transition_[pair(s, a) * n_states_ + s_next];
  }
  std::span<const double> transition_row(std::size_t s, std::size_t a) const {
    return {transition_.data() + pair(s, a) * n_states_, n_states_};
  }
  /// x(s,a), ||x|| <= 1.
  auto feature(std::size_t s, std::size_t a) const { return features_.row(static_cast<Eigen::Index>(pair(s, a))).transpose(); }
  const Eigen::MatrixXd& features() const { return features_; }

  Eigen::Map<const Vector> phi(std::size_t s, std::size_t a, std::size_t s_next) const {
    return Eigen::Map<const Vector>(phi_.data() + (pair(s, a) * n_states_ + s_next) * d_phi_,
                                    static_cast<Eigen::Index>(d_phi_));
  }
  /// E_{s'|s,a} phi(s,a,s').
  Vector expected_phi(std::size_t s, std::size_t a) const;

  std::size_t n_tasks() const { return tasks_.size(); }
  const TaskInfo& task(std::size_t i) const;
  const Vector& w(std::size_t i) const { return task(i).w; }
  double reward(std::size_t task_id, std::size_t s, std::size_t a, std::size_t s_next) const {
    return phi(s, a, s_next).dot(task(task_id).w);
  }

  const NetworkParams& planted_theta() const { return planted_theta_; }
  /// Greedy policy of task 0 under the planted SF.
  const std::vector<std::size_t>& planted_policy() const { return planted_policy_; }
  /// psi*(s,a), rows = pair index.
  const Eigen::MatrixXd& planted_sf() const { return planted_sf_; }

  /// Sup over (s,a) of ||psi*(s,a) - E[phi + gamma psi*(s', a*(s'))]||_inf.
  double planted_bellman_residual() const;

  /// Samples s' from P(.|s,a) with one uniform draw.
  std::size_t sample_next(std::size_t s, std::size_t a, Rng& rng) const;

 private:
  friend SyntheticMdp plant(const MdpConfig&, std::vector<double>, Eigen::MatrixXd, NetworkParams, const Vector&);
  friend std::size_t add_task(SyntheticMdp&, const Vector&);
  friend std::size_t add_perturbed_task(SyntheticMdp&, std::size_t, double, std::uint64_t);
  friend SyntheticMdp read_mdp(std::istream&);

  void finalize();  // derived tables: cumulative rows, planted SF, phi_max, r_max
  void refresh_r_max();

  MdpConfig config_;
  std::size_t n_states_ = 0, n_actions_ = 0, d_phi_ = 0;
  double gamma_ = 0.0;
  std::vector<double> transition_;
  std::vector<double> cumulative_;
  Eigen::MatrixXd features_;
  std::vector<double> phi_;
  std::vector<TaskInfo> tasks_;
  NetworkParams planted_theta_;
  std::vector<std::size_t> planted_policy_;
  Eigen::MatrixXd planted_sf_;
  double phi_max_ = 0.0, r_max_ = 0.0;
};

/// Random instance: flat-Dirichlet transition rows, unit-norm Gaussian features,
/// He-scaled Theta*, unit-norm Gaussian w*_0.
SyntheticMdp generate(const MdpConfig& config);

/// Planted construction on caller-supplied tables. transition is (s*A + a)*S + s'
/// and row-stochastic; features has one row per pair with norm <= 1.
SyntheticMdp plant(const MdpConfig& config, std::vector<double> transition, Eigen::MatrixXd features,
                   NetworkParams theta, const Vector& w0);

/// Appends w as given. Returns the new task id.
std::size_t add_task(SyntheticMdp& mdp, const Vector& w);

/// Appends w_base + delta * u (u a seeded random unit direction), renormalized to unit norm.
std::size_t add_perturbed_task(SyntheticMdp& mdp, std::size_t base_task, double delta, std::uint64_t seed);

/// One environment transition; reward is that of `task_id`.
Transition step(const SyntheticMdp& mdp, std::size_t task_id, std::size_t s, std::size_t a, Rng& rng);

// ---- exact tabular solvers -------------------------------------------------

struct TabularSolution {
  Eigen::MatrixXd psi;  // rows = pair index, optimal SF under the returned policy
  QTable q;
  std::vector<std::size_t> policy;
  double q_residual = 0.0;    // sup |q - T* q|
  double psi_residual = 0.0;  // sup |psi - (E phi + gamma psi(s', pi(s')))|
  std::size_t iterations = 0;
};

/// Optimal SF / Q for reward phi^T w by SF value iteration with greedy improvement.
/// Throws ConvergenceError after max_iterations.
TabularSolution tabular_sf_solve(const SyntheticMdp& mdp, const VectorRef& w, double tol = 1e-10,
                                 std::size_t max_iterations = 200000);

/// Greedy action per state, ties to the lowest action id.
std::vector<std::size_t> greedy_policy(const QTable& q);

/// Exact Q^pi for reward phi^T w and a deterministic policy (dense linear solve).
QTable evaluate_policy(const SyntheticMdp& mdp, const VectorRef& w, std::span<const std::size_t> policy);

/// Value of the worst deterministic policy, per state (min-value iteration).
Vector worst_values(const SyntheticMdp& mdp, const VectorRef& w, double tol = 1e-10);

/// Normalizes a policy's mean start value between the worst and the optimal policy.
struct ReturnScale {
  double optimal = 0.0;
  double worst = 0.0;
};
ReturnScale return_scale(const SyntheticMdp& mdp, const VectorRef& w);
double normalized_return(const SyntheticMdp& mdp, const VectorRef& w, std::span<const std::size_t> policy,
                         const ReturnScale& scale);

// ---- archive -----------------------------------------------------------------

void write_mdp(std::ostream& out, const SyntheticMdp& mdp);
SyntheticMdp read_mdp(std::istream& in);

}  // namespace sfdqn

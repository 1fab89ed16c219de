#pragma once

// Numerical checks of the convergence analysis at small scale: second-moment
// eigenvalues rho1 / rho2, the finite-difference Hessian of the population
// Bellman error around Theta*, and rate fits on training logs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sfdqn/kernels.hpp"
#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"
#include "sfdqn/rng.hpp"
#include "sfdqn/trainer.hpp"

namespace sfdqn {

/// Smallest eigenvalue of sum_i weight_i v_i v_i^T / sum_i weight_i (rows of V). Unit weights when empty.
double min_second_moment_eigenvalue(const Eigen::MatrixXd& V, std::span<const double> weights = {});

enum class Rho2Distribution { uniform, sampled };

/// rho2 = lambda_min E[phi phi^T] with (s,a) uniform and s' ~ P(.|s,a). `uniform` enumerates
/// exactly; `sampled` draws `samples` transitions from the same distribution.
double rho2_compute(const SyntheticMdp& mdp, Rho2Distribution dist = Rho2Distribution::uniform,
                    std::size_t samples = 100000, std::uint64_t seed = 1);

/// Pairs (s, a*(s)) over states reachable from `start` under the planted greedy policy.
std::vector<std::size_t> optimal_reachable_pairs(const SyntheticMdp& mdp, std::size_t start = 0);

/// Population Bellman error f(Theta) = mean over support pairs of
/// ||psi(Theta; s, a) - E_{s'}[phi + gamma psi*(s', a*(s'))]||^2.
struct PopulationMsbe {
  std::vector<std::size_t> pairs;
  Eigen::MatrixXd inputs;   // x(s,a) per support pair
  Eigen::MatrixXd targets;  // bootstrap target per support pair

  static PopulationMsbe build(const SyntheticMdp& mdp);
  double operator()(const NetworkParams& theta, Exec exec = Exec::serial) const;
};

/// rho1 estimate per layer: lambda_min of mean_{pairs} sum_k grad_l psi_k grad_l psi_k^T at theta.
std::vector<double> rho1_hat(const NetworkParams& theta, const Eigen::MatrixXd& inputs);

/// Central finite-difference Hessian of f with respect to the coordinates `indices` of x0.
/// Every entry is computed independently, so the result is symmetric only up to rounding.
Eigen::MatrixXd fd_hessian(const std::function<double(std::span<const double>)>& f, std::span<const double> x0,
                           std::span<const std::size_t> indices, double h = 1e-5);

struct HessianSpectrum {
  double min_eig = 0.0;
  double max_eig = 0.0;
  double asymmetry = 0.0;  // max |H - H^T| / max |H| of the raw difference quotients
  std::size_t n_params = 0;
};

/// Spectrum of the finite-difference Hessian of the population Bellman error in layer `layer`
/// (all trunks). Throws KinkProximityError when some pre-activation at a support input is
/// below kink_threshold in absolute value.
HessianSpectrum hessian_spectrum_at(const NetworkParams& theta, const SyntheticMdp& mdp, std::size_t layer,
                                    double h = 1e-5, double kink_threshold = 1e-4);

struct RateFit {
  double slope = 0.0;
  double ratio = 0.0;  // exp(slope) for the geometric fit
  double r2 = 0.0;
  std::size_t points = 0;
  bool degenerate = false;  // constant series
};

/// Least squares of log err on t over points with err > 1e-12. Needs at least 20 such points.
RateFit rate_fit_w(std::span<const double> t, std::span<const double> err);
RateFit rate_fit_w(const TrainingLog& log);

/// Least squares of log err on log t over the tail half of the series (t > 0, err > 0).
RateFit rate_fit_theta(std::span<const double> t, std::span<const double> err);
RateFit rate_fit_theta(const TrainingLog& log);

/// Fixed transition set drawn with (s,a) uniform, s' ~ P.
std::vector<Transition> sample_transitions(const SyntheticMdp& mdp, std::size_t task_id, std::size_t n, Rng& rng);

/// max_i |1 - kappa lambda_i(sum_m phi_m phi_m^T)|.
double predicted_w_ratio(const SyntheticMdp& mdp, std::span<const Transition> batch, double kappa);

/// Repeated full-batch w updates from w0; returns ||w^(t) - w*|| for t = 0..T.
std::vector<double> w_full_batch_errors(const SyntheticMdp& mdp, std::size_t task_id, std::span<const Transition> batch,
                                        double kappa, std::size_t T, const Vector& w0);

struct TheoryConstants {
  std::vector<double> rho1_hat;  // per layer
  double rho2 = 0.0;
  std::vector<HessianSpectrum> hessian;  // per layer, empty when skipped
  RateFit w_rate;
  RateFit theta_rate;
  std::vector<std::pair<std::string, double>> extra;  // run-specific named values
};

void write_theory_csv(std::ostream& out, const TheoryConstants& c, const std::string& config_echo);

}  // namespace sfdqn

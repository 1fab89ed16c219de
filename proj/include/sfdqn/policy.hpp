#pragma once

// Behavior policies and the GPI action values
//     Q~(s,a) = max_c psi(Theta_c; s, a)^T w.

#include <cstddef>
#include <span>
#include <vector>

#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"
#include "sfdqn/rng.hpp"

namespace sfdqn {

/// Linear decay from `start` to `end` over the first decay_fraction * T steps, then flat.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double decay_fraction = 0.2;

  double at(std::size_t t, std::size_t T) const;
  void validate() const;
};

struct PolicySpec {
  enum class Kind { greedy, epsilon_greedy, softmax };
  Kind kind = Kind::epsilon_greedy;
  EpsilonSchedule epsilon;
  double temperature = 1.0;

  static PolicySpec greedy() { return {Kind::greedy, {}, 1.0}; }
  static PolicySpec epsilon_greedy(EpsilonSchedule e) { return {Kind::epsilon_greedy, e, 1.0}; }
  static PolicySpec constant_epsilon(double eps) { return {Kind::epsilon_greedy, {eps, eps, 0.0}, 1.0}; }
  static PolicySpec softmax(double temperature) { return {Kind::softmax, {}, temperature}; }

  void validate() const;
};

const char* to_string(PolicySpec::Kind kind);

/// Lowest index among the maxima.
std::size_t argmax(std::span<const double> q);

/// Per-action max over networks of psi(Theta_c; s, a)^T w. Throws ValidationError on an empty list.
Vector q_values_gpi(std::span<const NetworkParams> sfs, const VectorRef& w, const SyntheticMdp& mdp, std::size_t s);

/// Draws an action. t, T index the epsilon schedule. Throws ValidationError on NaN.
std::size_t select_action(std::span<const double> q, const PolicySpec& spec, Rng& rng, std::size_t t = 0,
                          std::size_t T = 1);

/// Fraction of states (rows) whose greedy actions differ.
double policy_mismatch(const QTable& a, const QTable& b);

}  // namespace sfdqn

#include "sfdqn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfdqn/error.hpp"

namespace sfdqn {

double EpsilonSchedule::at(std::size_t t, std::size_t T) const {
  const double horizon = decay_fraction * static_cast<double>(T);
  if (horizon <= 0.0 || static_cast<double>(t) >= horizon) return end;
  return start + (end - start) * static_cast<double>(t) / horizon;
}

void EpsilonSchedule::validate() const {
  if (!(start >= 0.0 && start <= 1.0 && end >= 0.0 && end <= 1.0))
    throw ValidationError("epsilon must lie in [0, 1]");
  if (!(decay_fraction >= 0.0 && decay_fraction <= 1.0)) throw ValidationError("decay_fraction must lie in [0, 1]");
}

void PolicySpec::validate() const {
  if (kind == Kind::epsilon_greedy) epsilon.validate();
  if (kind == Kind::softmax && !(temperature > 0.0 && std::isfinite(temperature)))
    throw ValidationError("softmax temperature must be > 0");
}

const char* to_string(PolicySpec::Kind kind) {
  switch (kind) {
    case PolicySpec::Kind::greedy: return "greedy";
    case PolicySpec::Kind::epsilon_greedy: return "epsilon_greedy";
    case PolicySpec::Kind::softmax: return "softmax";
  }
  return "?";
}

std::size_t argmax(std::span<const double> q) {
  if (q.empty()) throw ValidationError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = a;
  return best;
}

Vector q_values_gpi(std::span<const NetworkParams> sfs, const VectorRef& w, const SyntheticMdp& mdp, std::size_t s) {
  if (sfs.empty()) throw ValidationError("GPI needs at least one SF network");
  if (s >= mdp.n_states()) throw ValidationError("state id out of range");
  Vector q = Vector::Constant(static_cast<Eigen::Index>(mdp.n_actions()), -std::numeric_limits<double>::infinity());
  for (const auto& p : sfs) {
    if (p.head_dim() != static_cast<std::size_t>(w.size()))
      throw ValidationError("SF head_dim differs from reward-mapping length");
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double v = forward_sf(p, mdp.feature(s, a)).dot(w);
      q[static_cast<Eigen::Index>(a)] = std::max(q[static_cast<Eigen::Index>(a)], v);
    }
  }
  return q;
}

std::size_t select_action(std::span<const double> q, const PolicySpec& spec, Rng& rng, std::size_t t, std::size_t T) {
  if (q.empty()) throw ValidationError("no actions to select from");
  for (double v : q)
    if (std::isnan(v)) throw ValidationError("NaN action value");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (spec.kind) {
    case PolicySpec::Kind::greedy:
      return argmax(q);
    case PolicySpec::Kind::epsilon_greedy: {
      // Always two draws so the stream position does not depend on the branch.
      const double u = unif(rng);
      std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
      const std::size_t random_action = pick(rng);
      return u < spec.epsilon.at(t, T) ? random_action : argmax(q);
    }
    case PolicySpec::Kind::softmax: {
      const double top = q[argmax(q)];
      std::vector<double> weights(q.size());
      double total = 0.0;
      for (std::size_t a = 0; a < q.size(); ++a) {
        weights[a] = std::exp((q[a] - top) / spec.temperature);
        total += weights[a];
      }
      double u = unif(rng) * total;
      for (std::size_t a = 0; a < q.size(); ++a) {
        u -= weights[a];
        if (u < 0.0) return a;
      }
      return argmax(q);
    }
  }
  return argmax(q);
}

double policy_mismatch(const QTable& a, const QTable& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw StructuralError("Q tables differ in shape");
  if (a.rows() == 0) return 0.0;
  const auto pa = greedy_policy(a);
  const auto pb = greedy_policy(b);
  std::size_t diff = 0;
  for (std::size_t s = 0; s < pa.size(); ++s) diff += pa[s] != pb[s];
  return static_cast<double>(diff) / static_cast<double>(pa.size());
}

}  // namespace sfdqn

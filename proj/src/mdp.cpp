#include "sfdqn/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sfdqn/binary_io.hpp"
#include "sfdqn/error.hpp"

namespace sfdqn {

namespace {

constexpr std::uint32_t kArchiveVersion = 1;

using PairStateMap = Eigen::Map<const RowMatrix>;

PairStateMap transition_matrix(const SyntheticMdp& mdp) {
  return PairStateMap(mdp.transition_row(0, 0).data(), static_cast<Eigen::Index>(mdp.n_pairs()),
                      static_cast<Eigen::Index>(mdp.n_states()));
}

// E_{s'} phi(s,a,s') for all pairs, rows = pair index.
Eigen::MatrixXd expected_phi_table(const SyntheticMdp& mdp) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(mdp.n_pairs()), static_cast<Eigen::Index>(mdp.d_phi()));
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      out.row(static_cast<Eigen::Index>(mdp.pair(s, a))) = mdp.expected_phi(s, a).transpose();
  return out;
}

QTable to_qtable(const Vector& by_pair, std::size_t n_states, std::size_t n_actions) {
  QTable q(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a)
      q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = by_pair[static_cast<Eigen::Index>(s * n_actions + a)];
  return q;
}

void check_w(const SyntheticMdp& mdp, const VectorRef& w) {
  if (static_cast<std::size_t>(w.size()) != mdp.d_phi())
    throw StructuralError("reward mapping has length " + std::to_string(w.size()) + ", expected " +
                          std::to_string(mdp.d_phi()));
  if (!w.allFinite()) throw ValidationError("non-finite reward mapping");
}

void check_policy(const SyntheticMdp& mdp, std::span<const std::size_t> policy) {
  if (policy.size() != mdp.n_states()) throw StructuralError("policy length differs from state count");
  for (std::size_t a : policy)
    if (a >= mdp.n_actions()) throw ValidationError("policy action out of range");
}

}  // namespace

void MdpConfig::validate() const {
  if (n_states < 2) throw ValidationError("n_states must be >= 2");
  if (n_actions < 1) throw ValidationError("n_actions must be >= 1");
  if (d_phi < 1) throw ValidationError("d_phi must be >= 1");
  net.validate();
  if (net.head_dim != d_phi)
    throw ValidationError("d_phi (" + std::to_string(d_phi) + ") must equal the network head_dim (" +
                          std::to_string(net.head_dim) + ")");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  if (successors > n_states) throw ValidationError("successors exceeds n_states");
}

const TaskInfo& SyntheticMdp::task(std::size_t i) const {
  if (i >= tasks_.size()) throw ValidationError("task id " + std::to_string(i) + " out of range");
  return tasks_[i];
}

Vector SyntheticMdp::expected_phi(std::size_t s, std::size_t a) const {
  Vector e = Vector::Zero(static_cast<Eigen::Index>(d_phi_));
  auto row = transition_row(s, a);
  for (std::size_t sn = 0; sn < n_states_; ++sn)
    if (row[sn] != 0.0) e += row[sn] * phi(s, a, sn);
  return e;
}

double SyntheticMdp::planted_bellman_residual() const {
  double worst = 0.0;
  for (std::size_t s = 0; s < n_states_; ++s)
    for (std::size_t a = 0; a < n_actions_; ++a) {
      Vector target = Vector::Zero(static_cast<Eigen::Index>(d_phi_));
      auto row = transition_row(s, a);
      for (std::size_t sn = 0; sn < n_states_; ++sn) {
        if (row[sn] == 0.0) continue;
        const auto next = static_cast<Eigen::Index>(pair(sn, planted_policy_[sn]));
        target += row[sn] * (phi(s, a, sn) + gamma_ * planted_sf_.row(next).transpose());
      }
      const Vector diff = planted_sf_.row(static_cast<Eigen::Index>(pair(s, a))).transpose() - target;
      worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
  return worst;
}

std::size_t SyntheticMdp::sample_next(std::size_t s, std::size_t a, Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  const double* row = cumulative_.data() + pair(s, a) * n_states_;
  const double* it = std::upper_bound(row, row + n_states_, u);
  const auto sn = static_cast<std::size_t>(it - row);
  return std::min(sn, n_states_ - 1);
}

void SyntheticMdp::finalize() {
  cumulative_.resize(transition_.size());
  for (std::size_t p = 0; p < n_pairs(); ++p) {
    double c = 0.0;
    std::size_t last = 0;
    for (std::size_t sn = 0; sn < n_states_; ++sn) {
      c += transition_[p * n_states_ + sn];
      cumulative_[p * n_states_ + sn] = c;
      if (transition_[p * n_states_ + sn] > 0.0) last = sn;
    }
    // absorb rounding so the last reachable state closes the interval
    for (std::size_t sn = last; sn < n_states_; ++sn) cumulative_[p * n_states_ + sn] = 1.0;
  }

  planted_sf_.resize(static_cast<Eigen::Index>(n_pairs()), static_cast<Eigen::Index>(d_phi_));
  for (std::size_t p = 0; p < n_pairs(); ++p)
    planted_sf_.row(static_cast<Eigen::Index>(p)) =
        forward_sf(planted_theta_, features_.row(static_cast<Eigen::Index>(p)).transpose()).transpose();

  const Vector q0 = planted_sf_ * tasks_.front().w;
  planted_policy_ = greedy_policy(to_qtable(q0, n_states_, n_actions_));

  phi_max_ = 0.0;
  for (std::size_t i = 0; i < phi_.size(); i += d_phi_) {
    const double n = Eigen::Map<const Vector>(phi_.data() + i, static_cast<Eigen::Index>(d_phi_)).norm();
    phi_max_ = std::max(phi_max_, n);
  }
  refresh_r_max();
}

void SyntheticMdp::refresh_r_max() {
  r_max_ = 0.0;
  for (const auto& t : tasks_)
    for (std::size_t i = 0; i < phi_.size(); i += d_phi_) {
      const double r = Eigen::Map<const Vector>(phi_.data() + i, static_cast<Eigen::Index>(d_phi_)).dot(t.w);
      r_max_ = std::max(r_max_, std::abs(r));
    }
}

SyntheticMdp generate(const MdpConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, "mdp");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Transition rows: normalized exponentials (a flat Dirichlet), optionally on a random support.
  const std::size_t S = config.n_states;
  const std::size_t n_pairs = S * config.n_actions;
  std::vector<double> transition(n_pairs * S, 0.0);
  std::vector<std::size_t> support(S);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    std::iota(support.begin(), support.end(), 0);
    std::size_t k = S;
    if (config.successors > 0) {
      k = config.successors;
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, S - 1);
        std::swap(support[i], support[pick(rng)]);
      }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double e = -std::log1p(-unif(rng));
      transition[p * S + support[i]] = e;
      total += e;
    }
    for (std::size_t sn = 0; sn < S; ++sn) transition[p * S + sn] /= total;
  }

  Eigen::MatrixXd features(static_cast<Eigen::Index>(n_pairs), static_cast<Eigen::Index>(config.net.input_dim()));
  for (Eigen::Index p = 0; p < features.rows(); ++p) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) features(p, j) = normal(rng);
    features.row(p).normalize();
  }

  NetworkParams theta = random_params(config.net, rng);

  Vector w0(static_cast<Eigen::Index>(config.d_phi));
  for (Eigen::Index i = 0; i < w0.size(); ++i) w0[i] = normal(rng);
  w0.normalize();
  return plant(config, std::move(transition), std::move(features), std::move(theta), w0);
}

SyntheticMdp plant(const MdpConfig& config, std::vector<double> transition, Eigen::MatrixXd features,
                   NetworkParams theta, const Vector& w0) {
  config.validate();
  const std::size_t S = config.n_states;
  const std::size_t n_pairs = S * config.n_actions;
  if (transition.size() != n_pairs * S) throw StructuralError("transition table has the wrong size");
  for (std::size_t p = 0; p < n_pairs; ++p) {
    double total = 0.0;
    for (std::size_t sn = 0; sn < S; ++sn) {
      const double v = transition[p * S + sn];
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("transition probabilities must be finite and >= 0");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("transition row does not sum to 1");
  }
  if (static_cast<std::size_t>(features.rows()) != n_pairs ||
      static_cast<std::size_t>(features.cols()) != config.net.input_dim())
    throw StructuralError("feature table has the wrong shape");
  for (Eigen::Index p = 0; p < features.rows(); ++p)
    if (!features.row(p).allFinite() || features.row(p).norm() > 1.0 + 1e-12)
      throw ValidationError("features must be finite with norm <= 1");
  if (theta.shape() != config.net) throw StructuralError("planted network shape differs from config");
  if (static_cast<std::size_t>(w0.size()) != config.d_phi) throw StructuralError("w0 length differs from d_phi");

  SyntheticMdp m;
  m.config_ = config;
  m.n_states_ = S;
  m.n_actions_ = config.n_actions;
  m.d_phi_ = config.d_phi;
  m.gamma_ = config.gamma;
  m.transition_ = std::move(transition);
  m.features_ = std::move(features);
  m.planted_theta_ = std::move(theta);
  m.tasks_.push_back(TaskInfo{w0, std::nullopt, 0.0, 0.0});

  // psi* and a*(s) first, then phi pointwise from them.
  m.phi_.assign(m.n_pairs() * S * config.d_phi, 0.0);
  m.finalize();
  const double g = config.gamma;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < m.n_actions_; ++a)
      for (std::size_t sn = 0; sn < S; ++sn) {
        const auto here = m.planted_sf_.row(static_cast<Eigen::Index>(m.pair(s, a)));
        const auto next = m.planted_sf_.row(static_cast<Eigen::Index>(m.pair(sn, m.planted_policy_[sn])));
        Eigen::Map<Vector> out(m.phi_.data() + (m.pair(s, a) * S + sn) * config.d_phi,
                               static_cast<Eigen::Index>(config.d_phi));
        out = (here - g * next).transpose();
      }
  m.finalize();
  return m;
}

std::size_t add_task(SyntheticMdp& mdp, const Vector& w) {
  check_w(mdp, w);
  mdp.tasks_.push_back(TaskInfo{w, std::nullopt, 0.0, 0.0});
  mdp.refresh_r_max();
  return mdp.tasks_.size() - 1;
}

std::size_t add_perturbed_task(SyntheticMdp& mdp, std::size_t base_task, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ValidationError("perturbation delta must be finite and >= 0");
  const Vector base = mdp.task(base_task).w;
  Rng rng = make_rng(seed, "task-perturbation");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(base.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
  u.normalize();
  Vector w = base + delta * u;
  const double n = w.norm();
  if (n == 0.0) throw ValidationError("perturbed reward mapping vanished; cannot renormalize");
  w /= n;
  mdp.tasks_.push_back(TaskInfo{w, base_task, delta, (w - base).norm()});
  mdp.refresh_r_max();
  return mdp.tasks_.size() - 1;
}

Transition step(const SyntheticMdp& mdp, std::size_t task_id, std::size_t s, std::size_t a, Rng& rng) {
  if (s >= mdp.n_states() || a >= mdp.n_actions()) throw ValidationError("state or action id out of range");
  const std::size_t sn = mdp.sample_next(s, a, rng);
  return Transition{s, a, sn, mdp.reward(task_id, s, a, sn)};
}

std::vector<std::size_t> greedy_policy(const QTable& q) {
  std::vector<std::size_t> pi(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    pi[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
  }
  return pi;
}

TabularSolution tabular_sf_solve(const SyntheticMdp& mdp, const VectorRef& w, double tol, std::size_t max_iterations) {
  check_w(mdp, w);
  if (!(tol > 0.0)) throw ValidationError("tolerance must be > 0");
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const auto A = mdp.n_actions();
  const Eigen::MatrixXd e_phi = expected_phi_table(mdp);
  const auto P = transition_matrix(mdp);
  const double g = mdp.gamma();

  TabularSolution sol;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(e_phi.rows(), e_phi.cols());
  Eigen::MatrixXd psi_pi(S, e_phi.cols());
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const QTable q = to_qtable(psi * w, mdp.n_states(), A);
    sol.policy = greedy_policy(q);
    for (Eigen::Index s = 0; s < S; ++s)
      psi_pi.row(s) = psi.row(static_cast<Eigen::Index>(static_cast<std::size_t>(s) * A + sol.policy[static_cast<std::size_t>(s)]));
    Eigen::MatrixXd next = e_phi + g * (P * psi_pi);
    const double change = (next - psi).cwiseAbs().maxCoeff();
    psi = std::move(next);
    sol.iterations = it;
    // The update error bounds the distance to the fixed point by change * gamma / (1 - gamma).
    if (change * std::max(1.0, w.norm()) < tol * (1.0 - g) / 2.0 || change == 0.0) break;
  }

  sol.psi = psi;
  sol.q = to_qtable(psi * w, mdp.n_states(), A);
  sol.policy = greedy_policy(sol.q);

  // Residuals of the returned tables.
  const Vector r_bar = e_phi * w;
  Vector v_max(S);
  for (Eigen::Index s = 0; s < S; ++s) v_max[s] = sol.q.row(s).maxCoeff();
  const Vector tq = r_bar + g * (P * v_max);
  for (Eigen::Index s = 0; s < S; ++s)
    psi_pi.row(s) = psi.row(static_cast<Eigen::Index>(static_cast<std::size_t>(s) * A + sol.policy[static_cast<std::size_t>(s)]));
  const Eigen::MatrixXd tpsi = e_phi + g * (P * psi_pi);
  sol.q_residual = 0.0;
  for (Eigen::Index p = 0; p < tq.size(); ++p)
    sol.q_residual = std::max(sol.q_residual, std::abs(tq[p] - psi.row(p).dot(w)));
  sol.psi_residual = (tpsi - psi).cwiseAbs().maxCoeff();
  if (sol.q_residual >= tol || sol.psi_residual >= tol)
    throw ConvergenceError("tabular SF solve did not converge in " + std::to_string(sol.iterations) + " iterations",
                           std::max(sol.q_residual, sol.psi_residual));
  return sol;
}

QTable evaluate_policy(const SyntheticMdp& mdp, const VectorRef& w, std::span<const std::size_t> policy) {
  check_w(mdp, w);
  check_policy(mdp, policy);
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const Eigen::MatrixXd e_phi = expected_phi_table(mdp);
  const Vector r_bar = e_phi * w;
  const auto P = transition_matrix(mdp);
  Eigen::MatrixXd p_pi(S, S);
  Vector r_pi(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto p = static_cast<Eigen::Index>(mdp.pair(static_cast<std::size_t>(s), policy[static_cast<std::size_t>(s)]));
    p_pi.row(s) = P.row(p);
    r_pi[s] = r_bar[p];
  }
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * p_pi;
  const Vector v = system.partialPivLu().solve(r_pi);
  const Vector q = r_bar + mdp.gamma() * (P * v);
  return to_qtable(q, mdp.n_states(), mdp.n_actions());
}

Vector worst_values(const SyntheticMdp& mdp, const VectorRef& w, double tol) {
  check_w(mdp, w);
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  const Vector r_bar = expected_phi_table(mdp) * w;
  const auto P = transition_matrix(mdp);
  Vector v = Vector::Zero(S);
  for (std::size_t it = 0; it < 1000000; ++it) {
    const Vector q = r_bar + mdp.gamma() * (P * v);
    Vector next(S);
    for (Eigen::Index s = 0; s < S; ++s) next[s] = q.segment(s * A, A).minCoeff();
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (change * mdp.gamma() < tol * (1.0 - mdp.gamma()) || change == 0.0) return v;
  }
  throw ConvergenceError("worst-policy value iteration did not converge", 0.0);
}

ReturnScale return_scale(const SyntheticMdp& mdp, const VectorRef& w) {
  const TabularSolution opt = tabular_sf_solve(mdp, w);
  ReturnScale scale;
  scale.optimal = opt.q.rowwise().maxCoeff().mean();
  scale.worst = worst_values(mdp, w).mean();
  return scale;
}

double normalized_return(const SyntheticMdp& mdp, const VectorRef& w, std::span<const std::size_t> policy,
                         const ReturnScale& scale) {
  const QTable q = evaluate_policy(mdp, w, policy);
  double v = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    v += q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(policy[s]));
  v /= static_cast<double>(mdp.n_states());
  const double span = scale.optimal - scale.worst;
  if (span <= 1e-12) return 1.0;
  return std::clamp((v - scale.worst) / span, 0.0, 1.0);
}

void write_mdp(std::ostream& out, const SyntheticMdp& mdp) {
  const auto& c = mdp.config();
  io::put_magic(out, "SFMDP");
  io::put<std::uint32_t>(out, kArchiveVersion);
  io::put<std::uint64_t>(out, c.n_states);
  io::put<std::uint64_t>(out, c.n_actions);
  io::put<std::uint64_t>(out, c.d_phi);
  io::put<double>(out, c.gamma);
  io::put<std::uint64_t>(out, c.successors);
  io::put<std::uint64_t>(out, c.seed);
  io::put<std::uint64_t>(out, c.net.widths.size());
  for (auto wdt : c.net.widths) io::put<std::uint64_t>(out, wdt);
  io::put<std::uint64_t>(out, c.net.head_dim);

  io::put_doubles(out, mdp.transition_row(0, 0).data() == nullptr
                           ? std::span<const double>{}
                           : std::span<const double>(mdp.transition_row(0, 0).data(), mdp.n_pairs() * mdp.n_states()));
  io::put_doubles(out, std::span<const double>(mdp.features().data(), static_cast<std::size_t>(mdp.features().size())));
  io::put_doubles(out, std::span<const double>(mdp.phi(0, 0, 0).data(), mdp.n_pairs() * mdp.n_states() * mdp.d_phi()));

  io::put<std::uint64_t>(out, mdp.n_tasks());
  for (std::size_t i = 0; i < mdp.n_tasks(); ++i) {
    const auto& t = mdp.task(i);
    io::put_doubles(out, std::span<const double>(t.w.data(), static_cast<std::size_t>(t.w.size())));
    io::put<std::uint8_t>(out, t.base.has_value() ? 1 : 0);
    io::put<std::uint64_t>(out, t.base.value_or(0));
    io::put<double>(out, t.delta);
    io::put<double>(out, t.realized_distance);
  }
  write_params(out, mdp.planted_theta());
}

SyntheticMdp read_mdp(std::istream& in) {
  io::expect_magic(in, "SFMDP");
  if (io::get<std::uint32_t>(in) != kArchiveVersion) throw StructuralError("unsupported MDP archive version");
  MdpConfig c;
  c.n_states = io::get<std::uint64_t>(in);
  c.n_actions = io::get<std::uint64_t>(in);
  c.d_phi = io::get<std::uint64_t>(in);
  c.gamma = io::get<double>(in);
  c.successors = io::get<std::uint64_t>(in);
  c.seed = io::get<std::uint64_t>(in);
  const auto n_widths = io::get<std::uint64_t>(in);
  if (n_widths < 2 || n_widths > 65) throw StructuralError("implausible network depth in archive");
  c.net.widths.clear();
  for (std::uint64_t i = 0; i < n_widths; ++i) c.net.widths.push_back(io::get<std::uint64_t>(in));
  c.net.head_dim = io::get<std::uint64_t>(in);
  c.validate();

  SyntheticMdp m;
  m.config_ = c;
  m.n_states_ = c.n_states;
  m.n_actions_ = c.n_actions;
  m.d_phi_ = c.d_phi;
  m.gamma_ = c.gamma;
  m.transition_ = io::get_doubles(in, m.n_pairs() * c.n_states);
  const auto feats = io::get_doubles(in, m.n_pairs() * c.net.input_dim());
  m.features_ = Eigen::Map<const Eigen::MatrixXd>(feats.data(), static_cast<Eigen::Index>(m.n_pairs()),
                                                  static_cast<Eigen::Index>(c.net.input_dim()));
  m.phi_ = io::get_doubles(in, m.n_pairs() * c.n_states * c.d_phi);
  const auto n_tasks = io::get<std::uint64_t>(in);
  if (n_tasks == 0) throw StructuralError("archive holds no tasks");
  for (std::uint64_t i = 0; i < n_tasks; ++i) {
    TaskInfo t;
    const auto w = io::get_doubles(in, c.d_phi);
    t.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(c.d_phi));
    const bool has_base = io::get<std::uint8_t>(in) != 0;
    const auto base = io::get<std::uint64_t>(in);
    if (has_base) t.base = base;
    t.delta = io::get<double>(in);
    t.realized_distance = io::get<double>(in);
    m.tasks_.push_back(std::move(t));
  }
  m.planted_theta_ = read_params(in);
  if (m.planted_theta_.shape() != c.net) throw StructuralError("planted network shape differs from archive header");
  m.finalize();
  return m;
}

}  // namespace sfdqn

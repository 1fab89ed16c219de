#include "sfdqn/trainer.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "sfdqn/csv.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/replay.hpp"

namespace sfdqn {

double StepSchedule::at(std::size_t t) const {
  if (kind == Kind::constant) return base;
  return base / (static_cast<double>(t) + 1.0 + offset);
}

void StepSchedule::validate(const char* name) const {
  if (!(base >= 0.0) || !std::isfinite(base)) throw ValidationError(std::string(name) + " must be finite and >= 0");
  if (!(offset >= 0.0) || !std::isfinite(offset)) throw ValidationError(std::string(name) + " offset must be >= 0");
}

void TrainerConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (buffer_capacity == 0) throw ValidationError("buffer_capacity must be >= 1");
  eta.validate("eta");
  if (kappa && (!(*kappa >= 0.0) || !std::isfinite(*kappa))) throw ValidationError("kappa must be finite and >= 0");
  policy.validate();
  if (theta_init_radius && !(*theta_init_radius >= 0.0)) throw ValidationError("theta_init_radius must be >= 0");
  if (w_init_radius && !(*w_init_radius >= 0.0)) throw ValidationError("w_init_radius must be >= 0");
  if (!(init_scale > 0.0)) throw ValidationError("init_scale must be > 0");
  if (eval_every == 0) throw ValidationError("eval_every must be >= 1");
}

double TrainerConfig::kappa_for(const SyntheticMdp& mdp) const {
  if (kappa) return *kappa;
  const double pm = mdp.phi_max();
  if (pm == 0.0) return 0.0;
  return 1.0 / (static_cast<double>(batch_size) * pm * pm);
}

std::vector<double> TrainingLog::column(double LogRow::*field) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

TaskOracle TaskOracle::build(const SyntheticMdp& mdp, std::size_t task_id) {
  const Vector& w = mdp.w(task_id);
  TaskOracle o;
  const TabularSolution sol = tabular_sf_solve(mdp, w);
  o.q_star = sol.q;
  o.policy = sol.policy;
  o.scale.optimal = sol.q.rowwise().maxCoeff().mean();
  o.scale.worst = worst_values(mdp, w).mean();
  return o;
}

double TaskOracle::normalized_return_of(const SyntheticMdp& mdp, const VectorRef& w_true, const QTable& q) const {
  const auto pi = greedy_policy(q);
  return normalized_return(mdp, w_true, pi, scale);
}

NetworkParams initial_theta(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg) {
  if (cfg.theta_init_radius)
    return init_near(mdp.planted_theta(), *cfg.theta_init_radius, derive_seed(cfg.seed, "init-theta", task_id));
  Rng rng = make_rng(cfg.seed, "init-theta", task_id);
  return random_params(mdp.config().net, rng, cfg.init_scale);
}

Vector initial_w(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg) {
  const Vector& target = mdp.w(task_id);
  if (!cfg.w_init_radius) return Vector::Zero(target.size());
  Rng rng = make_rng(cfg.seed, "init-w", task_id);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(target.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
  return target + *cfg.w_init_radius * u.normalized();
}

Vector w_update(const VectorRef& w, std::span<const Transition> batch, const SyntheticMdp& mdp, double kappa) {
  if (batch.empty()) throw ValidationError("w_update needs a non-empty batch");
  if (static_cast<std::size_t>(w.size()) != mdp.d_phi()) throw StructuralError("w length differs from d_phi");
  Vector g = Vector::Zero(w.size());
  for (const auto& tr : batch) {
    const auto phi = mdp.phi(tr.s, tr.a, tr.s_next);
    g += (phi.dot(w) - tr.reward) * phi;
  }
  return w - kappa * g;
}

GpiSet::GpiSet(std::span<const NetworkParams> priors, const SyntheticMdp& mdp, Exec exec) {
  for (const auto& p : priors) tables_.push_back(sf_table(p, mdp, exec));
}

double GpiSet::value(std::size_t pair, const VectorRef& w) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : tables_) best = std::max(best, t.row(static_cast<Eigen::Index>(pair)).dot(w));
  return best;
}

std::vector<double> theta_semi_gradient(const NetworkParams& theta, std::span<const Transition> batch,
                                        const SyntheticMdp& mdp, const VectorRef& w, const GpiSet& priors,
                                        const NetworkParams& bootstrap, double* td_residual, Exec exec) {
  if (theta.head_dim() != mdp.d_phi()) throw ValidationError("SF head_dim differs from d_phi");
  if (static_cast<std::size_t>(w.size()) != mdp.d_phi()) throw ValidationError("w length differs from d_phi");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  const auto d_in = static_cast<Eigen::Index>(mdp.d_in());
  const double g = mdp.gamma();
  std::vector<double> grad(theta.size(), 0.0);
  if (B == 0) {
    if (td_residual) *td_residual = 0.0;
    return grad;
  }

  // Bootstrap action by GPI at each s'.
  Eigen::MatrixXd X_next(B * A, d_in);
  for (Eigen::Index m = 0; m < B; ++m)
    for (Eigen::Index a = 0; a < A; ++a)
      X_next.row(m * A + a) = mdp.feature(batch[static_cast<std::size_t>(m)].s_next, static_cast<std::size_t>(a)).transpose();
  const Eigen::MatrixXd psi_next = batch_forward(bootstrap, X_next, exec);

  Eigen::MatrixXd X(B, d_in);
  Eigen::MatrixXd targets(B, static_cast<Eigen::Index>(mdp.d_phi()));
  for (Eigen::Index m = 0; m < B; ++m) {
    const Transition& tr = batch[static_cast<std::size_t>(m)];
    Eigen::Index best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < A; ++a) {
      const double v = std::max(psi_next.row(m * A + a).dot(w), priors.value(mdp.pair(tr.s_next, static_cast<std::size_t>(a)), w));
      if (v > best_v) {
        best_v = v;
        best = a;
      }
    }
    X.row(m) = mdp.feature(tr.s, tr.a).transpose();
    targets.row(m) = mdp.phi(tr.s, tr.a, tr.s_next).transpose() + g * psi_next.row(m * A + best);
  }
  const Eigen::MatrixXd residual = batch_forward(theta, X, exec) - targets;
  if (td_residual) {
    double s = 0.0;
    for (Eigen::Index m = 0; m < B; ++m) s += residual.row(m).norm();
    *td_residual = s / static_cast<double>(B);
  }
  batch_backward(theta, X, residual, 1.0, grad, exec);
  return grad;
}

NetworkParams theta_update(const NetworkParams& theta, std::span<const Transition> batch, const SyntheticMdp& mdp,
                           const VectorRef& w, const GpiSet& priors, double eta, const NetworkParams* bootstrap,
                           double* td_residual, Exec exec) {
  if (!(eta >= 0.0)) throw ValidationError("eta must be >= 0");
  const auto grad = theta_semi_gradient(theta, batch, mdp, w, priors, bootstrap ? *bootstrap : theta, td_residual, exec);
  NetworkParams out = theta;
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= eta * grad[i];
  return out;
}

QTable q_estimate(const NetworkParams& theta, const VectorRef& w, const SyntheticMdp& mdp, Exec exec) {
  return q_from_sf(sf_table(theta, mdp, exec), w, mdp);
}

QTable gpi_q_table(std::span<const NetworkParams> sfs, const VectorRef& w, const SyntheticMdp& mdp, Exec exec) {
  if (sfs.empty()) throw ValidationError("GPI needs at least one SF network");
  QTable q = q_estimate(sfs.front(), w, mdp, exec);
  for (std::size_t i = 1; i < sfs.size(); ++i) q = q.cwiseMax(q_estimate(sfs[i], w, mdp, exec));
  return q;
}

namespace {

struct Evaluator {
  const SyntheticMdp& mdp;
  std::size_t task;
  const GpiSet& priors;
  TaskOracle oracle;
  bool planted;

  void fill(LogRow& row, const NetworkParams& theta, const Vector& w, Exec exec) const {
    const Eigen::MatrixXd sf = sf_table(theta, mdp, exec);
    const QTable q = q_from_sf(sf, w, mdp);
    QTable behavior = q;
    for (const auto& t : priors.tables()) behavior = behavior.cwiseMax(q_from_sf(t, w, mdp));
    row.q_error = oracle.sup_error(q);
    row.policy_mismatch = policy_mismatch(behavior, oracle.q_star);
    row.normalized_return = oracle.normalized_return_of(mdp, mdp.w(task), behavior);
    row.theta_error = planted ? param_distance(theta, mdp.planted_theta()) : row.q_error;
  }
};

}  // namespace

TrainResult train_task(const SyntheticMdp& mdp, std::size_t task_id, std::span<const NetworkParams> prior_sfs,
                       const TrainerConfig& cfg) {
  return train_task(mdp, task_id, prior_sfs, cfg, initial_theta(mdp, task_id, cfg), initial_w(mdp, task_id, cfg));
}

TrainResult train_task(const SyntheticMdp& mdp, std::size_t task_id, std::span<const NetworkParams> prior_sfs,
                       const TrainerConfig& cfg, NetworkParams theta, Vector w) {
  cfg.validate();
  const Vector& w_star = mdp.w(task_id);
  if (theta.shape() != mdp.config().net) throw StructuralError("initial network shape differs from the MDP's");
  if (w.size() != w_star.size()) throw StructuralError("initial w length differs from d_phi");

  const GpiSet priors(cfg.use_gpi ? prior_sfs : std::span<const NetworkParams>{}, mdp, cfg.exec);
  const Evaluator eval{mdp, task_id, priors, TaskOracle::build(mdp, task_id), task_id == 0};
  const double kappa = cfg.kappa_for(mdp);
  const std::size_t T = cfg.iterations;

  Rng env_rng = make_rng(cfg.seed, "env-step", task_id);
  Rng act_rng = make_rng(cfg.seed, "behavior", task_id);
  Rng batch_rng = make_rng(cfg.seed, "replay", task_id);
  std::uniform_int_distribution<std::size_t> start_state(0, mdp.n_states() - 1);

  TrainResult res;
  res.log.agent = "sf";
  res.log.task = task_id;
  res.log.eval_every = cfg.eval_every;
  res.log.initial.t = 0;
  res.log.initial.w_error = (w - w_star).norm();
  eval.fill(res.log.initial, theta, w, cfg.exec);
  res.log.rows.reserve(T);

  ReplayBuffer buffer(cfg.buffer_capacity);
  std::vector<Transition> batch;
  NetworkParams target = theta;
  std::size_t s = start_state(env_rng);
  LogRow row = res.log.initial;
  std::vector<double> q_behavior(mdp.n_actions());

  for (std::size_t t = 0; t < T; ++t) {
    if (cfg.episode_length > 0 && t > 0 && t % cfg.episode_length == 0) s = start_state(env_rng);
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      q_behavior[a] = std::max(forward_sf(theta, mdp.feature(s, a)).dot(w), priors.value(mdp.pair(s, a), w));
    const std::size_t a = select_action(q_behavior, cfg.policy, act_rng, t, T);
    const Transition tr = step(mdp, task_id, s, a, env_rng);
    buffer.push(tr);
    s = tr.s_next;
    buffer.sample_into(cfg.batch_size, batch_rng, batch);

    const NetworkParams* bootstrap = cfg.target_sync > 0 ? &target : nullptr;
    double td = 0.0;
    NetworkParams next_theta = theta_update(theta, batch, mdp, w, priors, cfg.eta.at(t), bootstrap, &td, cfg.exec);
    w = w_update(w, batch, mdp, kappa);
    theta = std::move(next_theta);
    if (cfg.target_sync > 0 && (t + 1) % cfg.target_sync == 0) target = theta;
    if (!theta.all_finite() || !w.allFinite())
      throw ConvergenceError("SF training diverged at iteration " + std::to_string(t + 1), td);

    row.t = t + 1;
    row.td_residual = td;
    row.w_error = (w - w_star).norm();
    row.cumulative_reward += tr.reward;
    if ((t + 1) % cfg.eval_every == 0 || t + 1 == T) eval.fill(row, theta, w, cfg.exec);
    else if (task_id == 0) row.theta_error = param_distance(theta, mdp.planted_theta());
    res.log.rows.push_back(row);
  }
  res.theta = std::move(theta);
  res.w = std::move(w);
  return res;
}

std::vector<TrainResult> train_sequence(const SyntheticMdp& mdp, const TrainerConfig& cfg) {
  if (mdp.n_tasks() == 0) throw ValidationError("no tasks to train");
  std::vector<TrainResult> out;
  std::vector<NetworkParams> finished;
  for (std::size_t i = 0; i < mdp.n_tasks(); ++i) {
    out.push_back(train_task(mdp, i, finished, cfg));
    finished.push_back(out.back().theta);
  }
  return out;
}

std::string describe(const TrainerConfig& cfg) {
  std::ostringstream o;
  o << "iterations=" << cfg.iterations << "\n"
    << "batch_size=" << cfg.batch_size << "\n"
    << "buffer_capacity=" << cfg.buffer_capacity << "\n"
    << "eta=" << (cfg.eta.kind == StepSchedule::Kind::constant ? "constant" : "inverse_time") << " base=" << fmt(cfg.eta.base)
    << " offset=" << fmt(cfg.eta.offset) << "\n"
    << "kappa=" << (cfg.kappa ? fmt(*cfg.kappa) : std::string("auto")) << "\n"
    << "policy=" << to_string(cfg.policy.kind) << " epsilon_start=" << fmt(cfg.policy.epsilon.start)
    << " epsilon_end=" << fmt(cfg.policy.epsilon.end) << " decay_fraction=" << fmt(cfg.policy.epsilon.decay_fraction)
    << " temperature=" << fmt(cfg.policy.temperature) << "\n"
    << "theta_init_radius=" << (cfg.theta_init_radius ? fmt(*cfg.theta_init_radius) : std::string("fresh")) << "\n"
    << "init_scale=" << fmt(cfg.init_scale) << "\n"
    << "w_init_radius=" << (cfg.w_init_radius ? fmt(*cfg.w_init_radius) : std::string("zero")) << "\n"
    << "use_gpi=" << (cfg.use_gpi ? "true" : "false") << "\n"
    << "target_sync=" << cfg.target_sync << "\n"
    << "episode_length=" << cfg.episode_length << "\n"
    << "eval_every=" << cfg.eval_every << "\n"
    << "seed=" << cfg.seed << "\n";
  return o.str();
}

void write_log_csv(std::ostream& out, const TrainingLog& log, const std::string& config_echo) {
  out << kCsvVersionLine << " training-log\n";
  out << "# agent=" << log.agent << " task=" << log.task << "\n";
  std::istringstream lines(config_echo);
  for (std::string line; std::getline(lines, line);) out << "# " << line << "\n";
  out << "t,theta_error,q_error,w_error,td_residual,policy_mismatch,normalized_return,cumulative_reward\n";
  auto put = [&](const LogRow& r) {
    out << r.t << ',' << fmt(r.theta_error) << ',' << fmt(r.q_error) << ',' << fmt(r.w_error) << ','
        << fmt(r.td_residual) << ',' << fmt(r.policy_mismatch) << ',' << fmt(r.normalized_return) << ','
        << fmt(r.cumulative_reward) << '\n';
  };
  put(log.initial);
  for (const auto& r : log.rows) put(r);
}

}  // namespace sfdqn

#include "sfdqn/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfdqn/error.hpp"
#include "sfdqn/policy.hpp"
#include "sfdqn/replay.hpp"

namespace sfdqn {

namespace {

void check_dqn(const NetworkParams& q) {
  if (q.head_dim() != 2) throw StructuralError("DQN networks have two trunks");
}

}  // namespace

NetworkShape dqn_shape(const NetworkShape& sf_shape) {
  sf_shape.validate();
  const double target = static_cast<double>(sf_shape.size());
  NetworkShape best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= 4000; ++step) {
    const double c = 0.005 * step;
    NetworkShape s{sf_shape.widths, 2};
    for (std::size_t l = 1; l < s.widths.size(); ++l)
      s.widths[l] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(c * static_cast<double>(sf_shape.widths[l]))));
    const double err = std::abs(static_cast<double>(s.size()) - target);
    if (err < best_err) {
      best_err = err;
      best = s;
    }
  }
  return best;
}

double dqn_value(const NetworkParams& q_net, const VectorRef& x) {
  check_dqn(q_net);
  const Vector out = forward_sf(q_net, x);
  return out[0] - out[1];
}

QTable dqn_q_table(const NetworkParams& q_net, const SyntheticMdp& mdp, Exec exec) {
  check_dqn(q_net);
  const Eigen::MatrixXd out = sf_table(q_net, mdp, exec);
  return pair_values_to_table(out.col(0) - out.col(1), mdp);
}

QTable dqn_gpi_q(std::span<const NetworkParams> q_nets, const SyntheticMdp& mdp, Exec exec) {
  if (q_nets.empty()) throw ValidationError("DQN GPI needs at least one network");
  QTable q = dqn_q_table(q_nets.front(), mdp, exec);
  for (std::size_t i = 1; i < q_nets.size(); ++i) q = q.cwiseMax(dqn_q_table(q_nets[i], mdp, exec));
  return q;
}

NetworkParams dqn_initial(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "init-dqn", task_id);
  return random_params(dqn_shape(mdp.config().net), rng, cfg.init_scale);
}

DqnResult dqn_train(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg,
                    std::span<const NetworkParams> priors) {
  return dqn_train(mdp, task_id, cfg, priors, dqn_initial(mdp, task_id, cfg));
}

DqnResult dqn_train(const SyntheticMdp& mdp, std::size_t task_id, const TrainerConfig& cfg,
                    std::span<const NetworkParams> priors, NetworkParams q_net) {
  cfg.validate();
  check_dqn(q_net);
  if (q_net.shape().input_dim() != mdp.d_in()) throw StructuralError("DQN input width differs from the MDP features");
  const TaskOracle oracle = TaskOracle::build(mdp, task_id);
  const std::size_t T = cfg.iterations;
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  const auto d_in = static_cast<Eigen::Index>(mdp.d_in());
  const double g = mdp.gamma();

  std::vector<QTable> prior_tables;
  if (cfg.use_gpi)
    for (const auto& p : priors) prior_tables.push_back(dqn_q_table(p, mdp, cfg.exec));
  auto prior_value = [&](std::size_t s, std::size_t a) {
    double v = -std::numeric_limits<double>::infinity();
    for (const auto& t : prior_tables) v = std::max(v, t(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)));
    return v;
  };
  auto fill = [&](LogRow& row, const NetworkParams& net) {
    const QTable q = dqn_q_table(net, mdp, cfg.exec);
    QTable behavior = q;
    for (const auto& t : prior_tables) behavior = behavior.cwiseMax(t);
    row.q_error = oracle.sup_error(q);
    row.theta_error = row.q_error;
    row.policy_mismatch = policy_mismatch(behavior, oracle.q_star);
    row.normalized_return = oracle.normalized_return_of(mdp, mdp.w(task_id), behavior);
  };

  Rng env_rng = make_rng(cfg.seed, "env-step", task_id);
  Rng act_rng = make_rng(cfg.seed, "behavior", task_id);
  Rng batch_rng = make_rng(cfg.seed, "replay", task_id);
  std::uniform_int_distribution<std::size_t> start_state(0, mdp.n_states() - 1);

  DqnResult res;
  res.log.agent = "dqn";
  res.log.task = task_id;
  res.log.eval_every = cfg.eval_every;
  fill(res.log.initial, q_net);
  res.log.rows.reserve(T);

  ReplayBuffer buffer(cfg.buffer_capacity);
  std::vector<Transition> batch;
  NetworkParams target = q_net;
  std::size_t s = start_state(env_rng);
  LogRow row = res.log.initial;
  std::vector<double> q_behavior(mdp.n_actions());
  std::vector<double> grad(q_net.size());

  for (std::size_t t = 0; t < T; ++t) {
    if (cfg.episode_length > 0 && t > 0 && t % cfg.episode_length == 0) s = start_state(env_rng);
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      q_behavior[a] = std::max(dqn_value(q_net, mdp.feature(s, a)), prior_value(s, a));
    const std::size_t a = select_action(q_behavior, cfg.policy, act_rng, t, T);
    const Transition tr = step(mdp, task_id, s, a, env_rng);
    buffer.push(tr);
    s = tr.s_next;
    buffer.sample_into(cfg.batch_size, batch_rng, batch);

    const NetworkParams& boot = cfg.target_sync > 0 ? target : q_net;
    const auto B = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd X_next(B * A, d_in);
    for (Eigen::Index m = 0; m < B; ++m)
      for (Eigen::Index b = 0; b < A; ++b)
        X_next.row(m * A + b) = mdp.feature(batch[static_cast<std::size_t>(m)].s_next, static_cast<std::size_t>(b)).transpose();
    const Eigen::MatrixXd out_next = batch_forward(boot, X_next, cfg.exec);

    Eigen::MatrixXd X(B, d_in);
    Vector y(B);
    for (Eigen::Index m = 0; m < B; ++m) {
      const Transition& b = batch[static_cast<std::size_t>(m)];
      Eigen::Index best = 0;
      double best_v = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < A; ++c) {
        const double v = std::max(out_next(m * A + c, 0) - out_next(m * A + c, 1), prior_value(b.s_next, static_cast<std::size_t>(c)));
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      X.row(m) = mdp.feature(b.s, b.a).transpose();
      y[m] = b.reward + g * (out_next(best + m * A, 0) - out_next(best + m * A, 1));
    }
    const Eigen::MatrixXd out = batch_forward(q_net, X, cfg.exec);
    Eigen::MatrixXd upstream(B, 2);
    double td = 0.0;
    for (Eigen::Index m = 0; m < B; ++m) {
      const double delta = out(m, 0) - out(m, 1) - y[m];
      upstream(m, 0) = delta;
      upstream(m, 1) = -delta;
      td += std::abs(delta);
    }
    td /= static_cast<double>(B);
    std::fill(grad.begin(), grad.end(), 0.0);
    batch_backward(q_net, X, upstream, 1.0, grad, cfg.exec);
    const double eta = cfg.eta.at(t);
    auto v = q_net.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= eta * grad[i];
    if (cfg.target_sync > 0 && (t + 1) % cfg.target_sync == 0) target = q_net;
    if (!q_net.all_finite()) throw ConvergenceError("DQN training diverged at iteration " + std::to_string(t + 1), td);

    row.t = t + 1;
    row.td_residual = td;
    row.cumulative_reward += tr.reward;
    if ((t + 1) % cfg.eval_every == 0 || t + 1 == T) fill(row, q_net);
    res.log.rows.push_back(row);
  }
  res.q_net = std::move(q_net);
  return res;
}

}  // namespace sfdqn

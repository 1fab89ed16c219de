#include "sfdqn/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "sfdqn/csv.hpp"
#include "sfdqn/dqn.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/kernels.hpp"

namespace sfdqn {

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("transfer bounds need gamma in [0, 1)");
}

void echo(std::ostream& out, const std::string& config_echo) {
  std::istringstream lines(config_echo);
  for (std::string line; std::getline(lines, line);) out << "# " << line << "\n";
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double checkpoint_mean(const TrainingLog& log, std::size_t eval_every) {
  std::vector<double> v{log.initial.normalized_return};
  for (const auto& r : log.rows)
    if (r.t % eval_every == 0 || r.t == log.rows.size()) v.push_back(r.normalized_return);
  return mean(v);
}

TrainerConfig serial(TrainerConfig c) {
  c.exec = Exec::serial;
  return c;
}

}  // namespace

QTable sf_transfer_q(std::span<const NetworkParams> sfs, const VectorRef& w_target, const SyntheticMdp& mdp) {
  return gpi_q_table(sfs, w_target, mdp);
}

double transfer_error(const QTable& q_est, const VectorRef& w_target, const SyntheticMdp& mdp) {
  return transfer_error(q_est, w_target, mdp, tabular_sf_solve(mdp, w_target).q);
}

double transfer_error(const QTable& q_est, const VectorRef& w_target, const SyntheticMdp& mdp, const QTable& q_opt) {
  if (q_est.rows() != q_opt.rows() || q_est.cols() != q_opt.cols()) throw StructuralError("Q table shape mismatch");
  const auto pi = greedy_policy(q_est);
  return (q_opt - evaluate_policy(mdp, w_target, pi)).cwiseAbs().maxCoeff();
}

double sf_sup_error(const NetworkParams& theta, const Eigen::MatrixXd& psi_true, const SyntheticMdp& mdp) {
  const Eigen::MatrixXd psi = sf_table(theta, mdp);
  if (psi.rows() != psi_true.rows() || psi.cols() != psi_true.cols()) throw StructuralError("SF table shape mismatch");
  return (psi - psi_true).rowwise().norm().maxCoeff();
}

double min_task_distance(const SyntheticMdp& mdp, std::span<const std::size_t> sources, std::size_t target) {
  if (sources.empty()) throw ValidationError("need at least one source task");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j : sources) best = std::min(best, (mdp.w(j) - mdp.w(target)).norm());
  return best;
}

double thm3_bound(double gamma, double phi_max, double min_distance, double psi_err, double w_norm) {
  check_gamma(gamma);
  return 2.0 * gamma / (1.0 - gamma) * phi_max * min_distance + psi_err * w_norm * (1.0 + gamma / (1.0 - gamma));
}

double thm4_bound(double gamma, double phi_max, double min_distance, double psi_err, double w_norm) {
  check_gamma(gamma);
  return 2.0 / (1.0 - gamma) * phi_max * min_distance + psi_err * w_norm * (1.0 + gamma / (1.0 - gamma));
}

double thm3_bound(const SyntheticMdp& mdp, std::span<const std::size_t> sources, std::size_t target, double psi_err) {
  return thm3_bound(mdp.gamma(), mdp.phi_max(), min_task_distance(mdp, sources, target), psi_err, mdp.w(target).norm());
}

double thm4_bound(const SyntheticMdp& mdp, std::span<const std::size_t> sources, std::size_t target, double psi_err) {
  return thm4_bound(mdp.gamma(), mdp.phi_max(), min_task_distance(mdp, sources, target), psi_err, mdp.w(target).norm());
}

double q_star(double gamma, double r_max, double min_distance, double theta_init_distance) {
  check_gamma(gamma);
  if (!(theta_init_distance > 0.0)) throw ValidationError("q* needs a nonzero initial distance");
  return (1.0 + gamma) * r_max / (1.0 - gamma) * min_distance / theta_init_distance;
}

double q_star(const SyntheticMdp& mdp, std::span<const std::size_t> prior_tasks, std::size_t new_task,
              double theta_init_distance) {
  return q_star(mdp.gamma(), mdp.r_max(), min_task_distance(mdp, prior_tasks, new_task), theta_init_distance);
}

MdpConfig instance_config(const MdpConfig& env, std::uint64_t root_seed, std::size_t instance) {
  MdpConfig c = env;
  c.seed = derive_seed(root_seed, "env", instance);
  return c;
}

std::vector<GpiEffectRow> gpi_effect_table(const GpiEffectConfig& cfg) {
  for (double d : cfg.distances)
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("GPI-effect distances must be finite and >= 0");
  if (cfg.seeds == 0) throw ValidationError("GPI-effect table needs at least one seed");
  const std::size_t nd = cfg.distances.size();
  const auto n_seeds = static_cast<long>(cfg.seeds);

  // Indexed [seed * nd + distance] so the reduction order is fixed.
  std::vector<double> with(cfg.seeds * nd), without(cfg.seeds * nd), zero_shot(cfg.seeds * nd), realized(cfg.seeds * nd);
  std::vector<std::string> errors(cfg.seeds);

#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n_seeds; ++i) {
    const auto seed = static_cast<std::size_t>(i);
    try {
      const SyntheticMdp base = generate(instance_config(cfg.env, cfg.root_seed, seed));
      TrainerConfig src_cfg = serial(cfg.source);
      src_cfg.seed = derive_seed(cfg.source.seed, "instance", seed);
      const TrainResult src = train_task(base, 0, {}, src_cfg);
      const std::vector<NetworkParams> priors{src.theta};
      for (std::size_t k = 0; k < nd; ++k) {
        SyntheticMdp mdp = base;
        const std::size_t target = add_perturbed_task(mdp, 0, cfg.distances[k], derive_seed(cfg.root_seed, "task", seed));
        TrainerConfig on = serial(cfg.target);
        on.seed = derive_seed(cfg.target.seed, "instance", seed);
        on.use_gpi = true;
        TrainerConfig off = on;
        off.use_gpi = false;
        const TaskOracle oracle = TaskOracle::build(mdp, target);
        const QTable q0 = gpi_q_table(priors, mdp.w(target), mdp, Exec::serial);
        const std::size_t idx = seed * nd + k;
        zero_shot[idx] = oracle.normalized_return_of(mdp, mdp.w(target), q0);
        realized[idx] = mdp.task(target).realized_distance;
        with[idx] = checkpoint_mean(train_task(mdp, target, priors, on).log, on.eval_every);
        without[idx] = checkpoint_mean(train_task(mdp, target, priors, off).log, off.eval_every);
      }
    } catch (const std::exception& e) {
      errors[seed] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error("GPI-effect run failed: " + e);

  std::vector<GpiEffectRow> rows;
  for (std::size_t k = 0; k < nd; ++k) {
    std::vector<double> a, b, z, r;
    for (std::size_t i = 0; i < cfg.seeds; ++i) {
      a.push_back(with[i * nd + k]);
      b.push_back(without[i * nd + k]);
      z.push_back(zero_shot[i * nd + k]);
      r.push_back(realized[i * nd + k]);
    }
    rows.push_back(GpiEffectRow{cfg.distances[k], mean(r), mean(a), stddev(a), mean(b), stddev(b), mean(z), cfg.seeds});
  }
  return rows;
}

TransferResult transfer_experiment(const TransferConfig& cfg) {
  if (cfg.seeds == 0) throw ValidationError("transfer experiment needs at least one seed");
  const auto n = static_cast<long>(cfg.seeds);
  std::vector<TransferRow> rows(cfg.seeds);
  std::vector<std::vector<TrainingLog>> logs(cfg.seeds);
  std::vector<std::string> errors(cfg.seeds);

#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto inst = static_cast<std::size_t>(i);
    try {
      SyntheticMdp mdp = generate(instance_config(cfg.env, cfg.root_seed, inst));
      const std::size_t target = add_perturbed_task(mdp, 0, cfg.distance, derive_seed(cfg.root_seed, "task", inst));
      TrainerConfig sf_cfg = serial(cfg.sf);
      sf_cfg.seed = derive_seed(cfg.sf.seed, "instance", inst);
      TrainerConfig dqn_cfg = serial(cfg.dqn);
      dqn_cfg.seed = derive_seed(cfg.dqn.seed, "instance", inst);

      const TrainResult sf = train_task(mdp, 0, {}, sf_cfg);
      const DqnResult dqn = dqn_train(mdp, 0, dqn_cfg);
      const std::vector<NetworkParams> sf_src{sf.theta};
      const std::vector<NetworkParams> dqn_src{dqn.q_net};
      const std::size_t sources[] = {0};

      const TaskOracle oracle = TaskOracle::build(mdp, target);
      const QTable q_sf = sf_transfer_q(sf_src, mdp.w(target), mdp);
      const QTable q_dqn = dqn_gpi_q(dqn_src, mdp, Exec::serial);
      TransferRow& row = rows[inst];
      row.instance = inst;
      row.distance = mdp.task(target).realized_distance;
      row.sf_transfer_error = transfer_error(q_sf, mdp.w(target), mdp, oracle.q_star);
      row.dqn_transfer_error = transfer_error(q_dqn, mdp.w(target), mdp, oracle.q_star);
      row.psi_error = sf_sup_error(sf.theta, mdp.planted_sf(), mdp);
      row.dqn_q_error = (dqn_q_table(dqn.q_net, mdp, Exec::serial) - tabular_sf_solve(mdp, mdp.w(0)).q).cwiseAbs().maxCoeff();
      row.thm3_bound = thm3_bound(mdp, sources, target, row.psi_error);
      row.thm4_bound = thm4_bound(mdp, sources, target, row.psi_error);
      const double init_dist = param_distance(initial_theta(mdp, 0, sf_cfg), mdp.planted_theta());
      row.q_star = init_dist > 0.0 ? q_star(mdp, sources, target, init_dist) : 0.0;
      row.sf_return = oracle.normalized_return_of(mdp, mdp.w(target), q_sf);
      row.dqn_return = oracle.normalized_return_of(mdp, mdp.w(target), q_dqn);

      if (cfg.train_target) {
        logs[inst].push_back(train_task(mdp, target, sf_src, sf_cfg).log);
        logs[inst].push_back(dqn_train(mdp, target, dqn_cfg, dqn_src).log);
      }
    } catch (const std::exception& e) {
      errors[inst] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error("transfer run failed: " + e);

  TransferResult out;
  out.rows = std::move(rows);
  for (auto& l : logs)
    for (auto& x : l) out.target_logs.push_back(std::move(x));
  return out;
}

void write_gpi_effect_csv(std::ostream& out, const std::vector<GpiEffectRow>& rows, const std::string& config_echo) {
  out << kCsvVersionLine << " gpi-effect\n";
  echo(out, config_echo);
  out << "distance,realized_distance,with_gpi_mean,with_gpi_std,without_gpi_mean,without_gpi_std,zero_shot_gpi_mean,seeds\n";
  for (const auto& r : rows)
    out << fmt(r.distance) << ',' << fmt(r.realized_distance) << ',' << fmt(r.with_gpi_mean) << ',' << fmt(r.with_gpi_std)
        << ',' << fmt(r.without_gpi_mean) << ',' << fmt(r.without_gpi_std) << ',' << fmt(r.zero_shot_mean) << ','
        << r.seeds << '\n';
}

void write_transfer_csv(std::ostream& out, const std::vector<TransferRow>& rows, const std::string& config_echo) {
  out << kCsvVersionLine << " transfer-report\n";
  echo(out, config_echo);
  out << "instance,distance,sf_transfer_error,dqn_transfer_error,psi_error,dqn_q_error,thm3_bound,thm4_bound,q_star,"
         "sf_normalized_return,dqn_normalized_return\n";
  for (const auto& r : rows)
    out << r.instance << ',' << fmt(r.distance) << ',' << fmt(r.sf_transfer_error) << ',' << fmt(r.dqn_transfer_error)
        << ',' << fmt(r.psi_error) << ',' << fmt(r.dqn_q_error) << ',' << fmt(r.thm3_bound) << ',' << fmt(r.thm4_bound)
        << ',' << fmt(r.q_star) << ',' << fmt(r.sf_return) << ',' << fmt(r.dqn_return) << '\n';
}

}  // namespace sfdqn

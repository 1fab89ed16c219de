#include "sfdqn/theory.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <sstream>

#include "sfdqn/csv.hpp"
#include "sfdqn/error.hpp"

namespace sfdqn {

namespace {

double smallest_eigenvalue(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

RateFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  RateFit fit;
  fit.points = x.size();
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("rate fit needs at least two distinct abscissae");
  if (syy <= 1e-24 * std::max(1.0, my * my) * n) {
    fit.degenerate = true;
    fit.slope = 0.0;
    fit.ratio = 1.0;
    fit.r2 = 1.0;
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.ratio = std::exp(fit.slope);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (my + fit.slope * (x[i] - mx));
    ss_res += r * r;
  }
  fit.r2 = 1.0 - ss_res / syy;
  return fit;
}

void check_series(std::span<const double> t, std::span<const double> err) {
  if (t.size() != err.size()) throw StructuralError("rate fit needs equally long t and error series");
}

std::vector<double> log_times(const TrainingLog& log) {
  std::vector<double> t;
  for (const auto& r : log.rows) t.push_back(static_cast<double>(r.t));
  return t;
}

}  // namespace

double min_second_moment_eigenvalue(const Eigen::MatrixXd& V, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(V.rows()))
    throw StructuralError("one weight per row expected");
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(V.cols(), V.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    const double wt = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
    if (wt == 0.0) continue;
    M.noalias() += wt * V.row(i).transpose() * V.row(i);
    total += wt;
  }
  if (total <= 0.0) throw ValidationError("second moment needs positive total weight");
  return smallest_eigenvalue(M / total);
}

double rho2_compute(const SyntheticMdp& mdp, Rho2Distribution dist, std::size_t samples, std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(mdp.d_phi());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  if (dist == Rho2Distribution::uniform) {
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
        const auto row = mdp.transition_row(s, a);
        for (std::size_t sn = 0; sn < mdp.n_states(); ++sn)
          if (row[sn] != 0.0) M.noalias() += row[sn] * mdp.phi(s, a, sn) * mdp.phi(s, a, sn).transpose();
      }
    M /= static_cast<double>(mdp.n_pairs());
  } else {
    if (samples == 0) throw ValidationError("sampled rho2 needs samples > 0");
    Rng rng = make_rng(seed, "rho2");
    std::uniform_int_distribution<std::size_t> pair(0, mdp.n_pairs() - 1);
    for (std::size_t i = 0; i < samples; ++i) {
      const std::size_t p = pair(rng);
      const std::size_t s = p / mdp.n_actions(), a = p % mdp.n_actions();
      const std::size_t sn = mdp.sample_next(s, a, rng);
      M.noalias() += mdp.phi(s, a, sn) * mdp.phi(s, a, sn).transpose();
    }
    M /= static_cast<double>(samples);
  }
  return std::max(0.0, smallest_eigenvalue(M));
}

std::vector<std::size_t> optimal_reachable_pairs(const SyntheticMdp& mdp, std::size_t start) {
  if (start >= mdp.n_states()) throw ValidationError("start state out of range");
  const auto& pi = mdp.planted_policy();
  std::vector<bool> seen(mdp.n_states(), false);
  std::deque<std::size_t> queue{start};
  seen[start] = true;
  while (!queue.empty()) {
    const std::size_t s = queue.front();
    queue.pop_front();
    const auto row = mdp.transition_row(s, pi[s]);
    for (std::size_t sn = 0; sn < mdp.n_states(); ++sn)
      if (row[sn] > 0.0 && !seen[sn]) {
        seen[sn] = true;
        queue.push_back(sn);
      }
  }
  std::vector<std::size_t> pairs;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    if (seen[s]) pairs.push_back(mdp.pair(s, pi[s]));
  return pairs;
}

PopulationMsbe PopulationMsbe::build(const SyntheticMdp& mdp) {
  PopulationMsbe f;
  f.pairs = optimal_reachable_pairs(mdp);
  const auto n = static_cast<Eigen::Index>(f.pairs.size());
  f.inputs.resize(n, static_cast<Eigen::Index>(mdp.d_in()));
  f.targets = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(mdp.d_phi()));
  const auto& pi = mdp.planted_policy();
  const auto& psi = mdp.planted_sf();
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t p = f.pairs[static_cast<std::size_t>(i)];
    const std::size_t s = p / mdp.n_actions(), a = p % mdp.n_actions();
    f.inputs.row(i) = mdp.feature(s, a).transpose();
    const auto row = mdp.transition_row(s, a);
    for (std::size_t sn = 0; sn < mdp.n_states(); ++sn)
      if (row[sn] != 0.0)
        f.targets.row(i) += row[sn] * (mdp.phi(s, a, sn).transpose() +
                                        mdp.gamma() * psi.row(static_cast<Eigen::Index>(mdp.pair(sn, pi[sn]))));
  }
  return f;
}

double PopulationMsbe::operator()(const NetworkParams& theta, Exec exec) const {
  return mean_squared_error(theta, inputs, targets, exec);
}

std::vector<double> rho1_hat(const NetworkParams& theta, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) throw ValidationError("rho1 needs at least one input");
  std::vector<double> out;
  const Vector one = Vector::Ones(1);
  for (std::size_t l = 0; l < theta.shape().depth(); ++l) {
    const auto idx = theta.layer_indices(l);
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index m = 0; m < inputs.rows(); ++m)
      for (std::size_t k = 0; k < theta.head_dim(); ++k) {
        Vector e = Vector::Zero(static_cast<Eigen::Index>(theta.head_dim()));
        e[static_cast<Eigen::Index>(k)] = 1.0;
        const NetworkParams g = grad_sf(theta, inputs.row(m).transpose(), e);
        Vector gl(n);
        for (Eigen::Index i = 0; i < n; ++i) gl[i] = g.values()[idx[static_cast<std::size_t>(i)]];
        M.noalias() += gl * gl.transpose();
      }
    out.push_back(smallest_eigenvalue(M / static_cast<double>(inputs.rows())));
  }
  return out;
}

Eigen::MatrixXd fd_hessian(const std::function<double(std::span<const double>)>& f, std::span<const double> x0,
                           std::span<const std::size_t> indices, double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be > 0");
  for (std::size_t i : indices)
    if (i >= x0.size()) throw ValidationError("Hessian coordinate out of range");
  const auto n = static_cast<Eigen::Index>(indices.size());
  std::vector<double> x(x0.begin(), x0.end());
  auto eval = [&](std::size_t i, double di, std::size_t j, double dj) {
    x[i] += di;
    x[j] += dj;
    const double v = f(x);
    x[i] = x0[i];
    x[j] = x0[j];
    return v;
  };
  const double f0 = f(x);
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const std::size_t i = indices[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < n; ++b) {
      const std::size_t j = indices[static_cast<std::size_t>(b)];
      if (a == b)
        H(a, a) = (eval(i, h, i, 0.0) - 2.0 * f0 + eval(i, -h, i, 0.0)) / (h * h);
      else
        H(a, b) = (eval(i, h, j, h) - eval(i, h, j, -h) - eval(i, -h, j, h) + eval(i, -h, j, -h)) / (4.0 * h * h);
    }
  }
  return H;
}

HessianSpectrum hessian_spectrum_at(const NetworkParams& theta, const SyntheticMdp& mdp, std::size_t layer, double h,
                                    double kink_threshold) {
  if (layer >= theta.shape().depth()) throw ValidationError("layer index out of range");
  const PopulationMsbe f = PopulationMsbe::build(mdp);
  double closest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < f.inputs.rows(); ++i)
    closest = std::min(closest, min_abs_preactivation(theta, f.inputs.row(i).transpose()));
  if (closest < kink_threshold)
    throw KinkProximityError("a pre-activation is within " + fmt(closest) + " of a ReLU kink; jitter the instance",
                             closest);

  const auto idx = theta.layer_indices(layer);
  NetworkParams probe = theta;
  auto loss = [&](std::span<const double> v) {
    std::copy(v.begin(), v.end(), probe.values().begin());
    return f(probe);
  };
  const Eigen::MatrixXd H = fd_hessian(loss, theta.values(), idx, h);
  HessianSpectrum out;
  out.n_params = idx.size();
  const double scale = std::max(H.cwiseAbs().maxCoeff(), 1e-300);
  out.asymmetry = (H - H.transpose()).cwiseAbs().maxCoeff() / scale;
  const Eigen::MatrixXd S = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  out.min_eig = es.eigenvalues().minCoeff();
  out.max_eig = es.eigenvalues().maxCoeff();
  return out;
}

RateFit rate_fit_w(std::span<const double> t, std::span<const double> err) {
  check_series(t, err);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (err[i] > 1e-12 && std::isfinite(err[i])) {
      x.push_back(t[i]);
      y.push_back(std::log(err[i]));
    }
  if (x.size() < 20) throw ValidationError("geometric rate fit needs at least 20 points above 1e-12");
  return least_squares(x, y);
}

RateFit rate_fit_w(const TrainingLog& log) {
  const auto t = log_times(log);
  return rate_fit_w(t, log.column(&LogRow::w_error));
}

RateFit rate_fit_theta(std::span<const double> t, std::span<const double> err) {
  check_series(t, err);
  std::vector<double> x, y;
  for (std::size_t i = t.size() / 2; i < t.size(); ++i)
    if (t[i] > 0.0 && err[i] > 0.0 && std::isfinite(err[i])) {
      x.push_back(std::log(t[i]));
      y.push_back(std::log(err[i]));
    }
  if (x.size() < 2) throw ValidationError("log-log fit needs at least two positive tail points");
  RateFit fit = least_squares(x, y);
  fit.ratio = 0.0;
  return fit;
}

RateFit rate_fit_theta(const TrainingLog& log) {
  std::vector<double> t, err;
  for (const auto& r : log.rows)
    if (r.t % log.eval_every == 0 || r.t == log.rows.size()) {
      t.push_back(static_cast<double>(r.t));
      err.push_back(r.theta_error);
    }
  return rate_fit_theta(t, err);
}

std::vector<Transition> sample_transitions(const SyntheticMdp& mdp, std::size_t task_id, std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pair(0, mdp.n_pairs() - 1);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = pair(rng);
    out.push_back(step(mdp, task_id, p / mdp.n_actions(), p % mdp.n_actions(), rng));
  }
  return out;
}

double predicted_w_ratio(const SyntheticMdp& mdp, std::span<const Transition> batch, double kappa) {
  const auto d = static_cast<Eigen::Index>(mdp.d_phi());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  for (const auto& tr : batch) M.noalias() += mdp.phi(tr.s, tr.a, tr.s_next) * mdp.phi(tr.s, tr.a, tr.s_next).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  double r = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) r = std::max(r, std::abs(1.0 - kappa * es.eigenvalues()[i]));
  return r;
}

std::vector<double> w_full_batch_errors(const SyntheticMdp& mdp, std::size_t task_id, std::span<const Transition> batch,
                                        double kappa, std::size_t T, const Vector& w0) {
  const Vector& w_star = mdp.w(task_id);
  Vector w = w0;
  std::vector<double> err{(w - w_star).norm()};
  for (std::size_t t = 0; t < T; ++t) {
    w = w_update(w, batch, mdp, kappa);
    err.push_back((w - w_star).norm());
  }
  return err;
}

void write_theory_csv(std::ostream& out, const TheoryConstants& c, const std::string& config_echo) {
  out << kCsvVersionLine << " theory-constants\n";
  std::istringstream lines(config_echo);
  for (std::string line; std::getline(lines, line);) out << "# " << line << "\n";
  out << "quantity,layer,value\n";
  out << "rho2,," << fmt(c.rho2) << "\n";
  for (std::size_t l = 0; l < c.rho1_hat.size(); ++l) out << "rho1_hat," << l << ',' << fmt(c.rho1_hat[l]) << "\n";
  for (std::size_t l = 0; l < c.hessian.size(); ++l) {
    out << "hessian_min_eig," << l << ',' << fmt(c.hessian[l].min_eig) << "\n";
    out << "hessian_max_eig," << l << ',' << fmt(c.hessian[l].max_eig) << "\n";
    out << "hessian_asymmetry," << l << ',' << fmt(c.hessian[l].asymmetry) << "\n";
  }
  out << "w_rate_ratio,," << fmt(c.w_rate.ratio) << "\n";
  out << "w_rate_r2,," << fmt(c.w_rate.r2) << "\n";
  out << "w_rate_degenerate,," << (c.w_rate.degenerate ? 1 : 0) << "\n";
  out << "theta_loglog_slope,," << fmt(c.theta_rate.slope) << "\n";
  out << "theta_loglog_r2,," << fmt(c.theta_rate.r2) << "\n";
  for (const auto& [name, value] : c.extra) out << name << ",," << fmt(value) << "\n";
}

}  // namespace sfdqn

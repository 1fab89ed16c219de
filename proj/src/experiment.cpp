#include "sfdqn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sfdqn/csv.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/theory.hpp"
#include "sfdqn/transfer.hpp"

namespace sfdqn {

namespace fs = std::filesystem;

namespace {

constexpr double kRho1Floor = 1e-8;

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

TrainerConfig seeded(TrainerConfig c, std::uint64_t seed) {
  c.seed = seed;
  c.exec = Exec::serial;
  return c;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string echo_of(const ExperimentConfig& cfg) { return to_yaml(cfg); }

struct Tracked {
  const fs::path& dir;
  std::vector<std::string> files;

  std::ofstream open(const std::string& rel) {
    files.push_back(rel);
    return open_out(dir / rel);
  }
};

// Base instance plus the configured perturbed tasks.
SyntheticMdp base_instance(const ExperimentConfig& cfg) {
  SyntheticMdp mdp = generate(instance_config(cfg.env, cfg.seed, 0));
  if (cfg.kind == ExperimentKind::training)
    for (std::size_t i = 0; i < cfg.distances.size(); ++i)
      add_perturbed_task(mdp, 0, cfg.distances[i], run_seed(cfg, "task", i + 1));
  return mdp;
}

TheoryConstants base_constants(const SyntheticMdp& mdp) {
  TheoryConstants c;
  c.rho2 = rho2_compute(mdp);
  c.rho1_hat = rho1_hat(mdp.planted_theta(), PopulationMsbe::build(mdp).inputs);
  return c;
}

void add_rate_summary(TheoryConstants& c, const std::vector<TrainingLog>& task0_logs) {
  std::vector<double> w_ratio, w_r2, slope, r2, drop;
  for (const auto& log : task0_logs) {
    if (log.rows.size() < 20) continue;
    try {
      const RateFit w = rate_fit_w(log);
      w_ratio.push_back(w.ratio);
      w_r2.push_back(w.r2);
    } catch (const ValidationError&) {
    }
    const RateFit th = rate_fit_theta(log);
    slope.push_back(th.slope);
    r2.push_back(th.r2);
    const double at_T = log.rows.back().theta_error;
    const double at_T10 = log.rows[log.rows.size() / 10 - 1].theta_error;
    drop.push_back(at_T / at_T10);
  }
  c.w_rate.ratio = median(w_ratio);
  c.w_rate.r2 = median(w_r2);
  c.w_rate.slope = std::log(c.w_rate.ratio);
  c.theta_rate.slope = median(slope);
  c.theta_rate.r2 = median(r2);
  c.extra.emplace_back("theta_error_ratio_T_over_T10_median", median(drop));
  c.extra.emplace_back("runs", static_cast<double>(task0_logs.size()));
}

void run_training(const ExperimentConfig& cfg, const SyntheticMdp& mdp, Tracked& out) {
  const auto n = static_cast<long>(cfg.seeds);
  std::vector<std::vector<TrainResult>> results(cfg.seeds);
  std::vector<std::string> errors(cfg.seeds);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < n; ++k) {
    try {
      results[static_cast<std::size_t>(k)] =
          train_sequence(mdp, seeded(cfg.trainer, run_seed(cfg, "train", static_cast<std::size_t>(k))));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error("training failed: " + e);

  const std::string echo = echo_of(cfg);
  std::vector<TrainingLog> task0;
  auto rates = out.open("rates.csv");
  rates << kCsvVersionLine << " rate-fits\n";
  rates << "seed,task,w_ratio,w_r2,theta_loglog_slope,theta_loglog_r2,theta_error_T,theta_error_T_over_10\n";
  for (std::size_t k = 0; k < cfg.seeds; ++k)
    for (const auto& r : results[k]) {
      auto f = out.open("logs/sf_seed" + std::to_string(k) + "_task" + std::to_string(r.log.task) + ".csv");
      write_log_csv(f, r.log, echo);
      if (r.log.task == 0) task0.push_back(r.log);
      if (r.log.rows.size() < 20) continue;
      RateFit w;
      try {
        w = rate_fit_w(r.log);
      } catch (const ValidationError&) {
        w.ratio = std::nan("");
        w.r2 = std::nan("");
      }
      const RateFit th = rate_fit_theta(r.log);
      rates << k << ',' << r.log.task << ',' << fmt(w.ratio) << ',' << fmt(w.r2) << ',' << fmt(th.slope) << ','
            << fmt(th.r2) << ',' << fmt(r.log.rows.back().theta_error) << ','
            << fmt(r.log.rows[r.log.rows.size() / 10 - 1].theta_error) << '\n';
    }
  TheoryConstants c = base_constants(mdp);
  add_rate_summary(c, task0);
  auto th = out.open("theory.csv");
  write_theory_csv(th, c, echo);
}

void run_init_sweep(const ExperimentConfig& cfg, const SyntheticMdp& mdp, Tracked& out) {
  const auto& values = cfg.sweep->values;
  const std::size_t runs = values.size() * cfg.seeds;
  std::vector<TrainingLog> logs(runs);
  std::vector<std::string> errors(runs);
#pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < static_cast<long>(runs); ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const std::size_t v = idx / cfg.seeds, k = idx % cfg.seeds;
    try {
      TrainerConfig t = seeded(cfg.trainer, run_seed(cfg, "train", k));
      if (cfg.sweep->field == "w_init_radius") t.w_init_radius = values[v];
      else t.theta_init_radius = values[v];
      logs[idx] = train_task(mdp, 0, {}, t).log;
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error("sweep run failed: " + e);

  const std::string echo = echo_of(cfg);
  for (std::size_t j = 0; j < runs; ++j) {
    auto f = out.open("logs/sf_" + cfg.sweep->field + "_" + fmt(values[j / cfg.seeds]) + "_seed" +
                      std::to_string(j % cfg.seeds) + ".csv");
    write_log_csv(f, logs[j], echo);
  }

  // Seed-averaged curves side by side.
  auto merged = out.open("merged.csv");
  merged << kCsvVersionLine << " merged-curves\n";
  std::istringstream lines(echo);
  for (std::string line; std::getline(lines, line);) merged << "# " << line << "\n";
  merged << "t";
  for (double v : values)
    for (const char* col : {"w_error", "theta_error", "normalized_return"}) merged << ',' << col << "@" << fmt(v);
  merged << '\n';
  const std::size_t T = cfg.trainer.iterations;
  for (std::size_t t = 0; t <= T; ++t) {
    merged << t;
    for (std::size_t v = 0; v < values.size(); ++v) {
      double w = 0.0, th = 0.0, nr = 0.0;
      for (std::size_t k = 0; k < cfg.seeds; ++k) {
        const TrainingLog& log = logs[v * cfg.seeds + k];
        const LogRow& r = t == 0 ? log.initial : log.rows[t - 1];
        w += r.w_error;
        th += r.theta_error;
        nr += r.normalized_return;
      }
      const double n = static_cast<double>(cfg.seeds);
      merged << ',' << fmt(w / n) << ',' << fmt(th / n) << ',' << fmt(nr / n);
    }
    merged << '\n';
  }
  TheoryConstants c = base_constants(mdp);
  std::vector<TrainingLog> first;
  for (std::size_t k = 0; k < cfg.seeds; ++k) first.push_back(logs[k]);
  add_rate_summary(c, first);
  auto th = out.open("theory.csv");
  write_theory_csv(th, c, echo);
}

void run_gpi_effect(const ExperimentConfig& cfg, const SyntheticMdp& mdp, Tracked& out) {
  GpiEffectConfig g;
  g.env = cfg.env;
  g.distances = cfg.distances;
  g.seeds = cfg.seeds;
  g.source = cfg.source;
  g.source.seed = run_seed(cfg, "source", 0);
  g.target = cfg.trainer;
  g.target.seed = run_seed(cfg, "train", 0);
  g.root_seed = cfg.seed;
  const auto rows = gpi_effect_table(g);
  const std::string echo = echo_of(cfg);
  auto f = out.open("gpi_effect.csv");
  write_gpi_effect_csv(f, rows, echo);
  auto th = out.open("theory.csv");
  write_theory_csv(th, base_constants(mdp), echo);
}

void run_transfer(const ExperimentConfig& cfg, const SyntheticMdp& mdp, Tracked& out) {
  TransferConfig t;
  t.env = cfg.env;
  t.distance = cfg.distances.front();
  t.seeds = cfg.seeds;
  t.sf = cfg.trainer;
  t.sf.seed = run_seed(cfg, "train", 0);
  t.dqn = cfg.dqn;
  t.dqn.seed = run_seed(cfg, "dqn", 0);
  t.train_target = cfg.train_target;
  t.root_seed = cfg.seed;
  const TransferResult res = transfer_experiment(t);
  const std::string echo = echo_of(cfg);
  auto f = out.open("transfer.csv");
  write_transfer_csv(f, res.rows, echo);
  // Target logs come in (sf, dqn) pairs per instance.
  for (std::size_t i = 0; i < res.target_logs.size(); ++i) {
    const TrainingLog& log = res.target_logs[i];
    const std::size_t inst = i / 2;
    auto lf = out.open("logs/target_" + log.agent + "_instance" + std::to_string(inst) + ".csv");
    write_log_csv(lf, log, echo);
  }
  auto th = out.open("theory.csv");
  write_theory_csv(th, base_constants(mdp), echo);
}

void run_theory(const ExperimentConfig& cfg, Tracked& out) {
  const std::string echo = echo_of(cfg);
  TheoryConstants c;
  std::size_t used = 0;
  bool found = !cfg.theory.hessian;
  std::size_t rejected_kink = 0, rejected_rank = 0;
  SyntheticMdp mdp = generate(instance_config(cfg.env, cfg.seed, 0));
  for (std::size_t attempt = 0; cfg.theory.hessian && attempt < std::max<std::size_t>(1, cfg.theory.jitter_attempts); ++attempt) {
    SyntheticMdp candidate = generate(instance_config(cfg.env, cfg.seed, attempt));
    // The curvature bound is stated for rho1 > 0; a rank-deficient design on the
    // support (e.g. a unit active on too few support inputs) is outside it.
    const auto r1 = rho1_hat(candidate.planted_theta(), PopulationMsbe::build(candidate).inputs);
    if (*std::min_element(r1.begin(), r1.end()) < kRho1Floor) {
      ++rejected_rank;
      continue;
    }
    try {
      std::vector<HessianSpectrum> spectra;
      for (std::size_t l = 0; l < candidate.planted_theta().shape().depth(); ++l)
        spectra.push_back(hessian_spectrum_at(candidate.planted_theta(), candidate, l, cfg.theory.fd_step));
      c.hessian = std::move(spectra);
      mdp = std::move(candidate);
      used = attempt;
      found = true;
      break;
    } catch (const KinkProximityError&) {
      ++rejected_kink;
    }
  }
  if (!found)
    throw KinkProximityError("no usable instance in " + std::to_string(cfg.theory.jitter_attempts) + " attempts (" +
                                 std::to_string(rejected_kink) + " near a ReLU kink, " + std::to_string(rejected_rank) +
                                 " with rho1 ~ 0)",
                             0.0);

  auto archive = out.open("mdp.bin");
  write_mdp(archive, mdp);

  c.rho2 = rho2_compute(mdp);
  c.rho1_hat = rho1_hat(mdp.planted_theta(), PopulationMsbe::build(mdp).inputs);

  // Full-batch reward-mapping regression on a fixed transition set.
  Rng rng = make_rng(cfg.seed, "full-batch");
  const auto batch = sample_transitions(mdp, 0, cfg.theory.full_batch_transitions, rng);
  TrainerConfig fb = cfg.trainer;
  fb.batch_size = batch.size();
  const double kappa = fb.kappa_for(mdp);
  const auto err = w_full_batch_errors(mdp, 0, batch, kappa, cfg.theory.full_batch_iterations,
                                       Vector::Zero(static_cast<Eigen::Index>(mdp.d_phi())));
  std::vector<double> t(err.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  c.w_rate = rate_fit_w(t, err);
  c.theta_rate.slope = std::nan("");
  c.theta_rate.r2 = std::nan("");
  c.extra.emplace_back("w_predicted_ratio", predicted_w_ratio(mdp, batch, kappa));
  c.extra.emplace_back("kappa", kappa);
  c.extra.emplace_back("instance_attempt", static_cast<double>(used));
  c.extra.emplace_back("rejected_kink", static_cast<double>(rejected_kink));
  c.extra.emplace_back("rejected_rank", static_cast<double>(rejected_rank));
  c.extra.emplace_back("support_pairs", static_cast<double>(PopulationMsbe::build(mdp).pairs.size()));

  auto wf = out.open("w_full_batch.csv");
  wf << kCsvVersionLine << " w-full-batch\n";
  wf << "t,w_error\n";
  for (std::size_t i = 0; i < err.size(); ++i) wf << i << ',' << fmt(err[i]) << '\n';
  auto th = out.open("theory.csv");
  write_theory_csv(th, c, echo);
}

}  // namespace

std::uint64_t run_seed(const ExperimentConfig& cfg, std::string_view stream, std::size_t index) {
  return derive_seed(cfg.seed, stream, index);
}

std::vector<std::string> run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  Tracked out{out_dir, {}};
  {
    auto f = out.open("config.yaml");
    f << to_yaml(cfg);
  }
  if (cfg.kind == ExperimentKind::theory) {
    run_theory(cfg, out);
    return out.files;
  }
  const SyntheticMdp mdp = base_instance(cfg);
  {
    auto f = out.open("mdp.bin");
    write_mdp(f, mdp);
  }
  switch (cfg.kind) {
    case ExperimentKind::training: run_training(cfg, mdp, out); break;
    case ExperimentKind::init_sweep: run_init_sweep(cfg, mdp, out); break;
    case ExperimentKind::gpi_effect: run_gpi_effect(cfg, mdp, out); break;
    case ExperimentKind::transfer: run_transfer(cfg, mdp, out); break;
    case ExperimentKind::theory: break;
  }
  return out.files;
}

}  // namespace sfdqn

// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Set SFDQN_ACCEPTANCE_DIR to keep the run
// directories (default: a fresh temp directory, removed on success).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/experiment.hpp"
#include "sfdqn/theory.hpp"
#include "sfdqn/transfer.hpp"

using namespace sfdqn;
namespace fs = std::filesystem;

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("missing column " + name);
  }
  double num(std::size_t row, const std::string& name) const { return std::stod(rows[row][col(name)]); }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty())
      t.header = split(line);
    else
      t.rows.push_back(split(line));
  }
  return t;
}

std::map<std::string, double> theory_values(const fs::path& p) {
  const Table t = read_csv(p);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::string key = t.rows[i][t.col("quantity")];
    if (!t.rows[i][t.col("layer")].empty()) key += "@" + t.rows[i][t.col("layer")];
    out[key] = t.num(i, "value");
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Everything after the comment header, i.e. the CSV body.
std::string body(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == '#') {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) return "";
    pos = nl + 1;
  }
  return text.substr(pos);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double limit_s, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < limit_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.1fs of %.0fs", secs, limit_s);
  std::printf("%s %d %s: %s [%s%s]\n", ok ? "PASS" : "FAIL", id, title, o.detail.c_str(), timing,
              in_time ? "" : ", over time limit");
  std::fflush(stdout);
}

std::string f3(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

fs::path run_preset(const fs::path& root, const std::string& name, const std::string& tag) {
  const fs::path dir = root / (name + "_" + tag);
  fs::remove_all(dir);
  run_experiment(preset_config(name), dir);
  return dir;
}

}  // namespace

int main() {
  const char* keep = std::getenv("SFDQN_ACCEPTANCE_DIR");
  const fs::path root = keep ? fs::path(keep) : fs::temp_directory_path() / "sfdqn_acceptance";
  fs::create_directories(root);

  report(1, "planted realizability", 1.0, [] {
    double worst = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      MdpConfig c;  // 50 states, 4 actions, d_phi 4, widths {8, 16, 16}
      c.seed = derive_seed(2024, "acceptance-env", i);
      worst = std::max(worst, generate(c).planted_bellman_residual());
    }
    return Outcome{worst < 1e-10, "max residual over 20 instances " + f3(worst)};
  });

  report(2, "gradient oracle", 5.0, [] {
    Rng rng(77);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    int pairs = 0;
    while (pairs < 100) {
      const NetworkShape shape{{6, 8, 8}, pairs % 2 ? std::size_t{3} : std::size_t{1}};
      const auto p = random_params(shape, rng);
      Vector x(6);
      for (auto& v : x) v = normal(rng);
      x /= x.norm();
      if (min_abs_preactivation(p, x) < 1e-3) continue;
      Vector up(static_cast<Eigen::Index>(shape.head_dim));
      for (auto& v : up) v = normal(rng);
      const auto analytic = shape.head_dim == 1 ? grad_scalar(p, x) : grad_sf(p, x, up);
      const auto fd = oracle::fd_gradient(
          [&](const std::vector<double>& v) {
            const auto out = oracle::forward(NetworkParams(shape, v), oracle::to_std(x));
            double s = 0.0;
            for (std::size_t k = 0; k < out.size(); ++k) s += (shape.head_dim == 1 ? 1.0 : up[static_cast<Eigen::Index>(k)]) * out[k];
            return s;
          },
          {p.values().begin(), p.values().end()});
      worst = std::max(worst, oracle::max_rel_err({analytic.values().begin(), analytic.values().end()}, fd));
      ++pairs;
    }
    return Outcome{worst < 1e-4, "max relative error over 100 pairs " + f3(worst)};
  });

  report(3, "w linear convergence", 30.0, [] {
    MdpConfig c;
    c.n_states = 20;
    c.seed = 31;
    const auto m = generate(c);
    Rng rng = make_rng(31, "acceptance-batch");
    const auto batch = sample_transitions(m, 0, 200, rng);
    const double kappa = 1.0 / (200.0 * m.phi_max() * m.phi_max());
    const auto err = w_full_batch_errors(m, 0, batch, kappa, 400, Vector::Zero(4));
    std::vector<double> t(err.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    const RateFit fit = rate_fit_w(t, err);
    // independent spectral factor of I - kappa * sum phi phi^T
    std::vector<std::vector<double>> S(4, std::vector<double>(4, 0.0)), negS = S;
    for (const auto& tr : batch)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) S[i][j] += m.phi(tr.s, tr.a, tr.s_next)[i] * m.phi(tr.s, tr.a, tr.s_next)[j];
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) negS[i][j] = -S[i][j];
    const double lmin = oracle::min_eigenvalue(S), lmax = -oracle::min_eigenvalue(negS);
    const double predicted = std::max(std::abs(1 - kappa * lmin), std::abs(1 - kappa * lmax));
    const bool ok = fit.ratio < 1.0 && fit.r2 > 0.95 && std::abs(fit.ratio - predicted) <= 0.05;
    return Outcome{ok, "ratio " + f3(fit.ratio) + ", predicted " + f3(predicted) + ", R2 " + f3(fit.r2)};
  });

  report(4, "Theta sublinear convergence", 180.0, [&] {
    const auto cfg = preset_config("thm1_rates");
    const bool setup = cfg.trainer.eta.kind == StepSchedule::Kind::inverse_time && cfg.trainer.eta.base == 1.0 &&
                       cfg.trainer.eta.offset == 0.0 && cfg.trainer.theta_init_radius == 0.1 &&
                       cfg.trainer.iterations == 5000 && cfg.seeds == 5;
    const fs::path dir = run_preset(root, "thm1_rates", "a");
    const std::size_t T = cfg.trainer.iterations, every = cfg.trainer.eval_every;
    std::vector<double> slopes, drops;
    for (std::size_t k = 0; k < cfg.seeds; ++k) {
      const Table log = read_csv(dir / "logs" / ("sf_seed" + std::to_string(k) + "_task0.csv"));
      std::vector<double> x, y;
      double at_T = 0, at_T10 = 0;
      for (std::size_t r = 0; r < log.rows.size(); ++r) {
        const auto t = static_cast<std::size_t>(log.num(r, "t"));
        const double e = log.num(r, "theta_error");
        if (t == T) at_T = e;
        if (t == T / 10) at_T10 = e;
        // evaluation checkpoints in the tail half
        if (t >= T / 2 && t % every == 0 && e > 0) x.push_back(std::log(static_cast<double>(t))), y.push_back(std::log(e));
      }
      slopes.push_back(ls_slope(x, y));
      drops.push_back(at_T / at_T10);
    }
    const double s = median(slopes), d = median(drops);
    const bool ok = setup && s >= -1.4 && s <= -0.5 && d < 0.25;
    return Outcome{ok, "median tail slope " + f3(s) + ", median err(T)/err(T/10) " + f3(d)};
  });

  report(5, "GPI effect ordering", 300.0, [&] {
    const fs::path dir = run_preset(root, "table2_desk", "a");
    const Table t = read_csv(dir / "gpi_effect.csv");
    bool ok = t.rows.size() == 4;
    std::string detail;
    double gap_first = 0, gap_last = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const double w = t.num(i, "with_gpi_mean"), wo = t.num(i, "without_gpi_mean");
      ok = ok && w >= wo;
      if (i == 0) gap_first = w - wo;
      if (i + 1 == t.rows.size()) gap_last = w - wo;
      detail += t.rows[i][t.col("distance")] + ": " + f3(w) + " vs " + f3(wo) + "; ";
    }
    ok = ok && t.num(0, "distance") == 0.01 && t.num(t.rows.size() - 1, "distance") == 10 && gap_first > gap_last;
    return Outcome{ok, detail + "gap " + f3(gap_first) + " > " + f3(gap_last)};
  });

  report(6, "transfer bound soundness", 120.0, [&] {
    auto cfg = preset_config("fig_transfer_sf_vs_dqn");
    cfg.seeds = 10;
    cfg.train_target = false;
    cfg.name = "bound_check";
    const fs::path dir = root / "bound_check";
    fs::remove_all(dir);
    run_experiment(cfg, dir);
    const Table t = read_csv(dir / "transfer.csv");
    int violations = 0;
    double tightest = 0.0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const double e = t.num(i, "sf_transfer_error"), b = t.num(i, "thm3_bound");
      violations += e > b;
      tightest = std::max(tightest, e / b);
    }
    const bool ok = t.rows.size() == 10 && violations == 0;
    return Outcome{ok, std::to_string(t.rows.size()) + " instances, " + std::to_string(violations) +
                           " violations, max error/bound " + f3(tightest)};
  });

  report(7, "SF beats DQN in transfer", 300.0, [&] {
    const auto cfg = preset_config("fig_transfer_sf_vs_dqn");
    const fs::path dir = run_preset(root, "fig_transfer_sf_vs_dqn", "a");
    const Table t = read_csv(dir / "transfer.csv");
    std::vector<double> sf, dq;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      sf.push_back(t.num(i, "sf_transfer_error"));
      dq.push_back(t.num(i, "dqn_transfer_error"));
    }
    const double g = cfg.env.gamma;
    const double ratio = thm3_bound(g, 1.3, 0.7, 0.0, 1.0) / thm4_bound(g, 1.3, 0.7, 0.0, 1.0);
    const bool ok = cfg.seeds == 5 && g == 0.9 && t.rows.size() == 5 && median(sf) <= median(dq) &&
                    std::abs(ratio - g) <= 1e-15;
    return Outcome{ok, "median sf " + f3(median(sf)) + " vs dqn " + f3(median(dq)) + ", first-term ratio " + f3(ratio)};
  });

  report(8, "local convexity", 60.0, [&] {
    const auto cfg = preset_config("lemma_convexity");
    const fs::path dir = run_preset(root, "lemma_convexity", "a");
    const auto v = theory_values(dir / "theory.csv");
    const std::size_t L = cfg.env.net.depth();
    bool ok = cfg.env.n_states == 12 && cfg.env.net.widths.back() == 4 && L == 1;
    std::string detail;
    for (std::size_t l = 0; l < L; ++l) {
      const double e = v.at("hessian_min_eig@" + std::to_string(l));
      ok = ok && e > 0.0;
      detail += "layer " + std::to_string(l) + " min eig " + f3(e) + " max eig " + f3(v.at("hessian_max_eig@" + std::to_string(l))) + "; ";
    }
    return Outcome{ok, detail + "instance attempt " + f3(v.at("instance_attempt"))};
  });

  report(9, "determinism", 600.0, [&] {
    bool ok = true;
    std::string detail;
    for (const auto& p : presets()) {
      const fs::path a = root / (p.name + "_a");
      if (!fs::exists(a)) run_preset(root, p.name, "a");
      const fs::path b = run_preset(root, p.name, "b");
      std::size_t files = 0, same = 0;
      for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        ++files;
        if (e.path().extension() == ".csv" ? body(slurp(e.path())) == body(slurp(b / rel)) : slurp(e.path()) == slurp(b / rel))
          ++same;
      }
      ok = ok && files > 0 && files == same;
      detail += p.name + " " + std::to_string(same) + "/" + std::to_string(files) + "; ";
    }
    return Outcome{ok, detail};
  });

  if (!keep && failures == 0) fs::remove_all(root);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

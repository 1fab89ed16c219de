#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sfdqn/csv.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/experiment.hpp"
#include "sfdqn/mdp.hpp"

namespace sfdqn {

namespace fs = std::filesystem;

namespace {

struct Csv {
  std::string kind;  // text after the version tag
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw StructuralError("missing column " + name);
  }
  double num(std::size_t row, const std::string& name) const {
    const std::string& s = rows[row][col(name)];
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw StructuralError("bad number '" + s + "'");
    return v;
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  Csv c;
  std::string line;
  if (!std::getline(in, line) || line.rfind(kCsvVersionLine, 0) != 0)
    throw StructuralError("missing schema line '" + std::string(kCsvVersionLine) + "'");
  c.kind = line.size() > std::string(kCsvVersionLine).size() ? line.substr(std::string(kCsvVersionLine).size() + 1) : "";
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (c.header.empty()) {
      c.header = split(line);
      continue;
    }
    auto cells = split(line);
    if (cells.size() != c.header.size()) throw StructuralError("row width differs from header");
    c.rows.push_back(std::move(cells));
  }
  if (c.header.empty()) throw StructuralError("no header row");
  return c;
}

class Checker {
 public:
  VerifyReport report;

  template <typename F>
  void check(const std::string& name, F&& f) {
    try {
      const std::string problem = f();
      if (problem.empty()) report.passed.push_back(name);
      else report.failed.push_back(name + ": " + problem);
    } catch (const std::exception& e) {
      report.failed.push_back(name + ": " + e.what());
    }
  }
};

std::string check_mdp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "cannot open";
  const SyntheticMdp m = read_mdp(in);
  for (std::size_t s = 0; s < m.n_states(); ++s)
    for (std::size_t a = 0; a < m.n_actions(); ++a) {
      double total = 0.0;
      for (double p : m.transition_row(s, a)) {
        if (p < 0.0) return "negative transition probability";
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) return "transition row does not sum to 1";
      if (m.feature(s, a).norm() > 1.0 + 1e-12) return "feature norm above 1";
      for (std::size_t sn = 0; sn < m.n_states(); ++sn) {
        if (m.phi(s, a, sn).norm() > m.phi_max() + 1e-12) return "phi above phi_max";
        for (std::size_t k = 0; k < m.n_tasks(); ++k)
          if (std::abs(m.reward(k, s, a, sn)) > m.r_max() + 1e-12) return "reward above r_max";
      }
    }
  const double res = m.planted_bellman_residual();
  if (!(res < 1e-10)) return "planted Bellman residual " + fmt(res);
  return "";
}

std::string check_log(const Csv& c) {
  if (c.kind != "training-log") return "not a training log";
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    if (c.num(i, "t") != static_cast<double>(i)) return "iteration column is not 0..T";
    for (const auto& h : c.header)
      if (!std::isfinite(c.num(i, h))) return "non-finite " + h;
    for (const char* unit : {"policy_mismatch", "normalized_return"}) {
      const double v = c.num(i, unit);
      if (v < 0.0 || v > 1.0) return std::string(unit) + " outside [0, 1]";
    }
    for (const char* nonneg : {"theta_error", "q_error", "w_error", "td_residual"})
      if (c.num(i, nonneg) < 0.0) return std::string(nonneg) + " negative";
  }
  return "";
}

std::string check_transfer(const Csv& c) {
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    const double sf = c.num(i, "sf_transfer_error"), dqn = c.num(i, "dqn_transfer_error");
    if (sf < 0.0 || dqn < 0.0) return "negative transfer error";
    if (sf > c.num(i, "thm3_bound") + 1e-9) return "row " + std::to_string(i) + " exceeds its SF transfer bound";
    if (c.num(i, "thm4_bound") < c.num(i, "thm3_bound")) return "DQN bound below SF bound";
  }
  return "";
}

std::string check_gpi(const Csv& c) {
  for (std::size_t i = 0; i < c.rows.size(); ++i)
    for (const char* col : {"with_gpi_mean", "without_gpi_mean", "zero_shot_gpi_mean"}) {
      const double v = c.num(i, col);
      if (v < 0.0 || v > 1.0) return std::string(col) + " outside [0, 1]";
    }
  return "";
}

std::string check_theory(const Csv& c) {
  for (std::size_t i = 0; i < c.rows.size(); ++i)
    if (c.rows[i][c.col("quantity")] == "rho2" && !(c.num(i, "value") >= 0.0)) return "negative rho2";
  return "";
}

}  // namespace

VerifyReport verify_run(const fs::path& dir) {
  Checker ck;
  if (!fs::is_directory(dir)) {
    ck.report.failed.push_back(dir.string() + ": not a directory");
    return ck.report;
  }
  ck.check("config.yaml parses", [&] {
    load_config((dir / "config.yaml").string());
    return std::string();
  });
  ck.check("mdp.bin invariants", [&] { return check_mdp(dir / "mdp.bin"); });

  std::vector<fs::path> csvs;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  std::sort(csvs.begin(), csvs.end());
  for (const auto& p : csvs) {
    const std::string rel = fs::relative(p, dir).string();
    ck.check(rel, [&] {
      const Csv c = read_csv(p);
      if (c.kind == "training-log") return check_log(c);
      if (c.kind == "transfer-report") return check_transfer(c);
      if (c.kind == "gpi-effect") return check_gpi(c);
      if (c.kind == "theory-constants") return check_theory(c);
      return std::string();
    });
  }
  return ck.report;
}

}  // namespace sfdqn

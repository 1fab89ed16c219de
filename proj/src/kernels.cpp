#include "sfdqn/kernels.hpp"

#include <algorithm>
#include <vector>

#include "sfdqn/error.hpp"

namespace sfdqn {

namespace {

void check_rows(const NetworkParams& params, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != params.shape().input_dim())
    throw StructuralError("input batch width differs from the network input dimension");
}

}  // namespace

Eigen::MatrixXd batch_forward(const NetworkParams& params, const Eigen::MatrixXd& X, Exec exec) {
  check_rows(params, X);
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(params.head_dim()));
  if (exec == Exec::serial) {
    for (Eigen::Index m = 0; m < n; ++m) out.row(m) = forward_sf(params, X.row(m).transpose()).transpose();
    return out;
  }
#pragma omp parallel for schedule(static)
  for (Eigen::Index m = 0; m < n; ++m) out.row(m) = forward_sf(params, X.row(m).transpose()).transpose();
  return out;
}

void batch_backward(const NetworkParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& upstream,
                    double scale, std::span<double> out, Exec exec) {
  check_rows(params, X);
  if (upstream.rows() != X.rows() || static_cast<std::size_t>(upstream.cols()) != params.head_dim())
    throw StructuralError("upstream batch shape differs from inputs x head_dim");
  if (out.size() != params.size()) throw StructuralError("gradient buffer has wrong size");
  const Eigen::Index n = X.rows();
  if (exec == Exec::serial) {
    // Same two-stage shape as the parallel path: per-row gradient, then an ordered sum.
    std::vector<double> row(params.size());
    for (Eigen::Index m = 0; m < n; ++m) {
      std::fill(row.begin(), row.end(), 0.0);
      accumulate_grad_sf(params, X.row(m).transpose(), upstream.row(m).transpose(), scale, row);
      for (std::size_t i = 0; i < row.size(); ++i) out[i] += row[i];
    }
    return;
  }
  const std::size_t P = params.size();
  std::vector<double> rows(static_cast<std::size_t>(n) * P, 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index m = 0; m < n; ++m)
    accumulate_grad_sf(params, X.row(m).transpose(), upstream.row(m).transpose(), scale,
                       std::span<double>(rows.data() + static_cast<std::size_t>(m) * P, P));
  for (Eigen::Index m = 0; m < n; ++m) {
    const double* r = rows.data() + static_cast<std::size_t>(m) * P;
    for (std::size_t i = 0; i < P; ++i) out[i] += r[i];
  }
}

Eigen::MatrixXd sf_table(const NetworkParams& params, const SyntheticMdp& mdp, Exec exec) {
  return batch_forward(params, mdp.features(), exec);
}

QTable pair_values_to_table(const Vector& by_pair, const SyntheticMdp& mdp) {
  if (static_cast<std::size_t>(by_pair.size()) != mdp.n_pairs()) throw StructuralError("expected one value per pair");
  // Pair index is s * A + a, so a row-major states x actions view is a reshape.
  return Eigen::Map<const RowMatrix>(by_pair.data(), static_cast<Eigen::Index>(mdp.n_states()),
                                     static_cast<Eigen::Index>(mdp.n_actions()));
}

QTable q_from_sf(const Eigen::MatrixXd& sf, const VectorRef& w, const SyntheticMdp& mdp) {
  if (sf.cols() != w.size()) throw StructuralError("SF width differs from reward-mapping length");
  return pair_values_to_table(sf * w, mdp);
}

double mean_squared_error(const NetworkParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets,
                          Exec exec) {
  const Eigen::MatrixXd out = batch_forward(params, X, exec);
  if (out.rows() != targets.rows() || out.cols() != targets.cols())
    throw StructuralError("target table shape differs from network outputs");
  if (out.rows() == 0) return 0.0;
  const Eigen::VectorXd per_row = (out - targets).rowwise().squaredNorm();
  double s = 0.0;
  for (Eigen::Index m = 0; m < per_row.size(); ++m) s += per_row[m];
  return s / static_cast<double>(per_row.size());
}

}  // namespace sfdqn

#pragma once

// Batched network evaluation. Every kernel has a serial reference path and an
// OpenMP path; the OpenMP path parallelizes over rows and reduces per-row
// results in row order, so both paths return bitwise-identical results.

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"

namespace sfdqn {

enum class Exec { serial, parallel };

/// Network outputs for each row of X (rows are inputs). Result is rows(X) x head_dim.
Eigen::MatrixXd batch_forward(const NetworkParams& params, const Eigen::MatrixXd& X, Exec exec = Exec::parallel);

/// out += scale * sum_m grad( upstream.row(m) . forward_sf(params, X.row(m)) ).
void batch_backward(const NetworkParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& upstream,
                    double scale, std::span<double> out, Exec exec = Exec::parallel);

/// psi(params; s, a) for every pair, rows = pair index.
Eigen::MatrixXd sf_table(const NetworkParams& params, const SyntheticMdp& mdp, Exec exec = Exec::parallel);

/// Reshapes a per-pair value vector (length n_pairs) into a states x actions table.
QTable pair_values_to_table(const Vector& by_pair, const SyntheticMdp& mdp);

/// Q(s,a) = psi(s,a)^T w from a tabulated SF.
QTable q_from_sf(const Eigen::MatrixXd& sf, const VectorRef& w, const SyntheticMdp& mdp);

/// Mean over rows of ||forward_sf(params, X.row(m)) - targets.row(m)||^2.
double mean_squared_error(const NetworkParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets,
                          Exec exec = Exec::parallel);

}  // namespace sfdqn

#pragma once

// Fixed-architecture ReLU network with an averaging output head.
//
// A trunk maps x in R^{K_0} through L hidden ReLU layers
//     h_0 = x,   h_l = relu(theta_l^T h_{l-1})      theta_l in R^{K_{l-1} x K_l}
// and outputs the mean of the last hidden layer, (1/K_L) * 1^T h_L. The head is
// fixed; only theta_1..theta_L are trainable. A vector-valued network
// (head_dim > 1) is head_dim independent trunks of identical shape, one per
// output coordinate.
//
// Storage is a single flat vector: trunk-major, then layer-major, each layer
// row-major (entry (i, k) of theta_l at i * K_l + k). Column k of theta_l is the
// incoming weight vector of unit k.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfdqn/rng.hpp"

namespace sfdqn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LayerView = Eigen::Map<const RowMatrix>;
using MutableLayerView = Eigen::Map<RowMatrix>;

struct NetworkShape {
  std::vector<std::size_t> widths;  // K_0 = input dim, K_1..K_L hidden widths
  std::size_t head_dim = 1;

  std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_dim() const { return widths.empty() ? 0 : widths.front(); }
  std::size_t layer_size(std::size_t l) const { return widths[l] * widths[l + 1]; }
  std::size_t trunk_size() const;
  std::size_t size() const { return trunk_size() * head_dim; }

  /// Throws StructuralError unless depth >= 1, all widths >= 1 and head_dim >= 1.
  void validate() const;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

class NetworkParams {
 public:
  NetworkParams() = default;
  explicit NetworkParams(NetworkShape shape);  // zero weights
  NetworkParams(NetworkShape shape, std::vector<double> values);

  const NetworkShape& shape() const { return shape_; }
  std::size_t head_dim() const { return shape_.head_dim; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// theta_l of trunk k, l in [0, depth). Shape K_l x K_{l+1}.
  LayerView layer(std::size_t trunk, std::size_t l) const;
  MutableLayerView layer(std::size_t trunk, std::size_t l);

  std::size_t layer_offset(std::size_t trunk, std::size_t l) const;

  /// Copy of trunk k as a scalar (head_dim = 1) network.
  NetworkParams trunk(std::size_t k) const;

  /// Views into all entries of layer l across trunks, in storage order.
  std::vector<std::size_t> layer_indices(std::size_t l) const;

  bool all_finite() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;

 private:
  NetworkShape shape_;
  std::vector<double> values_;
};

using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Scalar output of a head_dim = 1 network.
double forward_scalar(const NetworkParams& params, const VectorRef& x);

/// Output vector of length head_dim; coordinate k is forward_scalar on trunk k.
Vector forward_sf(const NetworkParams& params, const VectorRef& x);

/// d(output)/d(theta) for a head_dim = 1 network, same shape as params.
/// Uses relu'(0) = 0.
NetworkParams grad_scalar(const NetworkParams& params, const VectorRef& x);

/// Gradient of upstream^T forward_sf(params, x).
NetworkParams grad_sf(const NetworkParams& params, const VectorRef& x, const VectorRef& upstream);

/// Adds scale * gradient of upstream^T forward_sf(params, x) into out (no allocation of a result).
void accumulate_grad_sf(const NetworkParams& params, const VectorRef& x, const VectorRef& upstream,
                        double scale, std::span<double> out);

/// Euclidean norm of the difference of the flattened parameters.
double param_distance(const NetworkParams& a, const NetworkParams& b);

/// Smallest |pre-activation| over all units and trunks at input x. Used to keep
/// finite-difference probes away from ReLU kinks.
double min_abs_preactivation(const NetworkParams& params, const VectorRef& x);

/// Gaussian weights N(0, scale^2 * 2 / K_{l-1}) per layer (He scaling).
NetworkParams random_params(const NetworkShape& shape, Rng& rng, double scale = 1.0);

/// target + a random direction of length exactly `radius` (radius 0 returns target).
NetworkParams init_near(const NetworkParams& target, double radius, std::uint64_t seed);

/// a += alpha * b
void axpy(double alpha, const NetworkParams& b, NetworkParams& a);

/// Binary record: "SFNP", u32 version, u64 L, u64 K_0..K_L, u64 head_dim, f64 entries.
void write_params(std::ostream& out, const NetworkParams& params);
NetworkParams read_params(std::istream& in);

}  // namespace sfdqn

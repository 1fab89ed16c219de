#include "sfdqn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sfdqn/binary_io.hpp"
#include "sfdqn/error.hpp"

namespace sfdqn {

namespace {

constexpr std::uint32_t kParamsVersion = 1;

void check_input(const NetworkShape& shape, const VectorRef& x) {
  if (static_cast<std::size_t>(x.size()) != shape.input_dim())
    throw StructuralError("input has length " + std::to_string(x.size()) + ", network expects " +
                          std::to_string(shape.input_dim()));
  if (!x.allFinite()) throw ValidationError("non-finite network input");
}

void check_same_shape(const NetworkParams& a, const NetworkParams& b) {
  if (a.shape() != b.shape()) throw StructuralError("network shapes differ");
}

// Forward pass of one trunk keeping pre-activations; returns the output.
double trunk_forward(const NetworkParams& p, std::size_t trunk, const VectorRef& x,
                     std::vector<Vector>* pre, std::vector<Vector>* act) {
  const std::size_t depth = p.shape().depth();
  Vector h = x;
  if (act) act->assign(1, h);
  if (pre) pre->clear();
  for (std::size_t l = 0; l < depth; ++l) {
    Vector z = p.layer(trunk, l).transpose() * h;
    h = z.cwiseMax(0.0);
    if (pre) pre->push_back(std::move(z));
    if (act) act->push_back(h);
  }
  return h.sum() / static_cast<double>(h.size());
}

void trunk_backward(const NetworkParams& p, std::size_t trunk, const std::vector<Vector>& pre,
                    const std::vector<Vector>& act, double scale, std::span<double> out) {
  const std::size_t depth = p.shape().depth();
  const auto& widths = p.shape().widths;
  auto relu_prime = [](const Vector& z) { return (z.array() > 0.0).cast<double>().matrix().eval(); };

  Vector delta = relu_prime(pre[depth - 1]) * (scale / static_cast<double>(widths[depth]));
  for (std::size_t l = depth; l-- > 0;) {
    MutableLayerView g(out.data() + p.layer_offset(trunk, l), static_cast<Eigen::Index>(widths[l]),
                       static_cast<Eigen::Index>(widths[l + 1]));
    g.noalias() += act[l] * delta.transpose();
    if (l > 0) delta = relu_prime(pre[l - 1]).cwiseProduct(p.layer(trunk, l) * delta);
  }
}

}  // namespace

std::size_t NetworkShape::trunk_size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1];
  return n;
}

void NetworkShape::validate() const {
  if (widths.size() < 2) throw StructuralError("network needs an input width and at least one hidden layer");
  for (std::size_t w : widths)
    if (w == 0) throw StructuralError("network widths must be >= 1");
  if (head_dim == 0) throw StructuralError("head_dim must be >= 1");
}

NetworkParams::NetworkParams(NetworkShape shape) : shape_(std::move(shape)) {
  shape_.validate();
  values_.assign(shape_.size(), 0.0);
}

NetworkParams::NetworkParams(NetworkShape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  shape_.validate();
  if (values_.size() != shape_.size())
    throw StructuralError("expected " + std::to_string(shape_.size()) + " parameters, got " +
                          std::to_string(values_.size()));
}

std::size_t NetworkParams::layer_offset(std::size_t trunk, std::size_t l) const {
  std::size_t off = trunk * shape_.trunk_size();
  for (std::size_t i = 0; i < l; ++i) off += shape_.layer_size(i);
  return off;
}

LayerView NetworkParams::layer(std::size_t trunk, std::size_t l) const {
  return LayerView(values_.data() + layer_offset(trunk, l), static_cast<Eigen::Index>(shape_.widths[l]),
                   static_cast<Eigen::Index>(shape_.widths[l + 1]));
}

MutableLayerView NetworkParams::layer(std::size_t trunk, std::size_t l) {
  return MutableLayerView(values_.data() + layer_offset(trunk, l), static_cast<Eigen::Index>(shape_.widths[l]),
                          static_cast<Eigen::Index>(shape_.widths[l + 1]));
}

NetworkParams NetworkParams::trunk(std::size_t k) const {
  if (k >= shape_.head_dim) throw StructuralError("trunk index out of range");
  NetworkShape s = shape_;
  s.head_dim = 1;
  const std::size_t n = shape_.trunk_size();
  auto first = values_.begin() + static_cast<std::ptrdiff_t>(k * n);
  return NetworkParams(std::move(s), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

std::vector<std::size_t> NetworkParams::layer_indices(std::size_t l) const {
  if (l >= shape_.depth()) throw StructuralError("layer index out of range");
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < shape_.head_dim; ++k) {
    const std::size_t off = layer_offset(k, l);
    for (std::size_t i = 0; i < shape_.layer_size(l); ++i) idx.push_back(off + i);
  }
  return idx;
}

bool NetworkParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double forward_scalar(const NetworkParams& params, const VectorRef& x) {
  if (params.head_dim() != 1) throw StructuralError("forward_scalar needs head_dim = 1");
  check_input(params.shape(), x);
  return trunk_forward(params, 0, x, nullptr, nullptr);
}

Vector forward_sf(const NetworkParams& params, const VectorRef& x) {
  check_input(params.shape(), x);
  Vector out(static_cast<Eigen::Index>(params.head_dim()));
  for (std::size_t k = 0; k < params.head_dim(); ++k)
    out[static_cast<Eigen::Index>(k)] = trunk_forward(params, k, x, nullptr, nullptr);
  return out;
}

NetworkParams grad_scalar(const NetworkParams& params, const VectorRef& x) {
  if (params.head_dim() != 1) throw StructuralError("grad_scalar needs head_dim = 1");
  Vector one = Vector::Ones(1);
  return grad_sf(params, x, one);
}

NetworkParams grad_sf(const NetworkParams& params, const VectorRef& x, const VectorRef& upstream) {
  NetworkParams g(params.shape());
  accumulate_grad_sf(params, x, upstream, 1.0, g.values());
  return g;
}

void accumulate_grad_sf(const NetworkParams& params, const VectorRef& x, const VectorRef& upstream,
                        double scale, std::span<double> out) {
  check_input(params.shape(), x);
  if (static_cast<std::size_t>(upstream.size()) != params.head_dim())
    throw ValidationError("upstream length " + std::to_string(upstream.size()) + " != head_dim " +
                          std::to_string(params.head_dim()));
  if (!upstream.allFinite()) throw ValidationError("non-finite upstream gradient");
  if (out.size() != params.size()) throw StructuralError("gradient buffer has wrong size");
  std::vector<Vector> pre, act;
  for (std::size_t k = 0; k < params.head_dim(); ++k) {
    const double u = upstream[static_cast<Eigen::Index>(k)];
    if (u == 0.0) continue;
    trunk_forward(params, k, x, &pre, &act);
    trunk_backward(params, k, pre, act, scale * u, out);
  }
}

double param_distance(const NetworkParams& a, const NetworkParams& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double min_abs_preactivation(const NetworkParams& params, const VectorRef& x) {
  check_input(params.shape(), x);
  double m = std::numeric_limits<double>::infinity();
  std::vector<Vector> pre;
  for (std::size_t k = 0; k < params.head_dim(); ++k) {
    trunk_forward(params, k, x, &pre, nullptr);
    for (const auto& z : pre) m = std::min(m, z.cwiseAbs().minCoeff());
  }
  return m;
}

NetworkParams random_params(const NetworkShape& shape, Rng& rng, double scale) {
  NetworkParams p(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < shape.head_dim; ++k)
    for (std::size_t l = 0; l < shape.depth(); ++l) {
      const double sd = scale * std::sqrt(2.0 / static_cast<double>(shape.widths[l]));
      auto layer = p.layer(k, l);
      for (Eigen::Index i = 0; i < layer.size(); ++i) layer.data()[i] = sd * normal(rng);
    }
  return p;
}

NetworkParams init_near(const NetworkParams& target, double radius, std::uint64_t seed) {
  if (!(radius >= 0.0)) throw ValidationError("init radius must be >= 0");
  NetworkParams out = target;
  if (radius == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(target.size());
  double norm = 0.0;
  for (double& d : dir) {
    d = normal(rng);
    norm += d * d;
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < dir.size(); ++i) out.values()[i] += radius * dir[i] / norm;
  return out;
}

void axpy(double alpha, const NetworkParams& b, NetworkParams& a) {
  check_same_shape(a, b);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += alpha * bv[i];
}

void write_params(std::ostream& out, const NetworkParams& params) {
  io::put_magic(out, "SFNP");
  io::put<std::uint32_t>(out, kParamsVersion);
  const auto& s = params.shape();
  io::put<std::uint64_t>(out, s.depth());
  for (std::size_t w : s.widths) io::put<std::uint64_t>(out, w);
  io::put<std::uint64_t>(out, s.head_dim);
  io::put_doubles(out, params.values());
}

NetworkParams read_params(std::istream& in) {
  io::expect_magic(in, "SFNP");
  if (io::get<std::uint32_t>(in) != kParamsVersion) throw StructuralError("unsupported network record version");
  NetworkShape s;
  const auto depth = io::get<std::uint64_t>(in);
  if (depth == 0 || depth > 64) throw StructuralError("implausible network depth in record");
  for (std::uint64_t l = 0; l <= depth; ++l) s.widths.push_back(io::get<std::uint64_t>(in));
  s.head_dim = io::get<std::uint64_t>(in);
  s.validate();
  return NetworkParams(s, io::get_doubles(in, s.size()));
}

}  // namespace sfdqn

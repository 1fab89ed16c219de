#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/network.hpp"

using namespace sfdqn;

namespace {

Vector unit_input(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n;
  Vector x(static_cast<Eigen::Index>(d));
  for (auto& v : x) v = n(rng);
  return x / x.norm();
}

std::vector<double> as_std(std::span<const double> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(NetworkShape({{3}, 1}).validate(), StructuralError);
  CHECK_THROWS_AS(NetworkShape({{3, 0}, 1}).validate(), StructuralError);
  CHECK_THROWS_AS(NetworkShape({{3, 2}, 0}).validate(), StructuralError);
  CHECK_NOTHROW(NetworkShape({{3, 2}, 1}).validate());
  const NetworkShape s{{4, 3, 2}, 5};
  CHECK(s.trunk_size() == 4 * 3 + 3 * 2);
  CHECK(s.size() == 5 * 18);
  CHECK_THROWS_AS(NetworkParams(s, std::vector<double>(7, 0.0)), StructuralError);
}

TEST_CASE("forward_scalar hand cases") {
  // identity first layer: relu(1) and relu(-1) averaged
  NetworkParams p({{2, 2}, 1}, {1.0, 0.0, 0.0, 1.0});
  Vector x(2);
  x << 1.0, -1.0;
  CHECK(forward_scalar(p, x) == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(3);
  const auto q = random_params({{5, 4, 3}, 1}, rng);
  CHECK(forward_scalar(q, Vector::Zero(5)) == 0.0);
}

TEST_CASE("forward matches the straight-line oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkShape shape{{4, 3, 3}, 3};
    const auto p = random_params(shape, rng);
    const Vector x = unit_input(4, rng);
    const auto ref = oracle::forward(p, oracle::to_std(x));
    const Vector got = forward_sf(p, x);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(got[static_cast<Eigen::Index>(k)] == doctest::Approx(ref[k]).epsilon(1e-13));
      CHECK(forward_scalar(p.trunk(k), x) == doctest::Approx(ref[k]).epsilon(1e-13));
    }
  }
}

TEST_CASE("forward_sf with head_dim 1 equals forward_scalar; zero input gives zero vector") {
  Rng rng(5);
  const auto p = random_params({{3, 4}, 1}, rng);
  const Vector x = unit_input(3, rng);
  CHECK(forward_sf(p, x)[0] == forward_scalar(p, x));
  const auto q = random_params({{3, 4}, 2}, rng);
  CHECK(forward_sf(q, Vector::Zero(3)).isZero(0.0));
}

TEST_CASE("grad_scalar hand cases") {
  // single unit in its linear region: gradient is x
  NetworkParams p({{3, 1}, 1}, {0.5, 0.2, 0.1});
  Vector x(3);
  x << 1.0, 2.0, -0.5;
  const auto g = grad_scalar(p, x);
  for (int i = 0; i < 3; ++i) CHECK(g.values()[static_cast<std::size_t>(i)] == doctest::Approx(x[i]));

  // second unit inactive -> its column is zero
  NetworkParams q({{2, 2}, 1}, {1.0, -1.0, 0.0, 0.0});
  Vector y(2);
  y << 1.0, 0.3;
  const auto gq = grad_scalar(q, y);
  CHECK(gq.layer(0, 0)(0, 1) == 0.0);
  CHECK(gq.layer(0, 0)(1, 1) == 0.0);
  CHECK(gq.layer(0, 0)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("grad_scalar and grad_sf match finite differences") {
  Rng rng(21);
  int checked = 0;
  while (checked < 30) {
    const NetworkShape shape{{4, 5, 3}, 2};
    const auto p = random_params(shape, rng);
    const Vector x = unit_input(4, rng);
    if (min_abs_preactivation(p, x) < 1e-3) continue;
    ++checked;
    Vector up(2);
    up << 0.7, -1.3;
    const auto g = grad_sf(p, x, up);
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& v) {
          const auto out = oracle::forward(NetworkParams(shape, v), oracle::to_std(x));
          return up[0] * out[0] + up[1] * out[1];
        },
        as_std(p.values()));
    CHECK(oracle::max_rel_err(as_std(g.values()), fd) < 1e-4);

    const auto t0 = p.trunk(0);
    const auto gs = grad_scalar(t0, x);
    const auto fds = oracle::fd_gradient(
        [&](const std::vector<double>& v) { return oracle::forward(NetworkParams(t0.shape(), v), oracle::to_std(x))[0]; },
        as_std(t0.values()));
    CHECK(oracle::max_rel_err(as_std(gs.values()), fds) < 1e-4);
  }
}

TEST_CASE("grad_sf upstream structure") {
  Rng rng(8);
  const auto p = random_params({{3, 4, 2}, 3}, rng);
  const Vector x = unit_input(3, rng);
  const auto zero = grad_sf(p, x, Vector::Zero(3));
  for (double v : zero.values()) CHECK(v == 0.0);

  Vector e1 = Vector::Zero(3);
  e1[1] = 1.0;
  const auto g = grad_sf(p, x, e1);
  const std::size_t per = p.shape().trunk_size();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (i < per || i >= 2 * per) CHECK(g.values()[i] == 0.0);

  std::vector<double> acc(p.size(), 0.0);
  accumulate_grad_sf(p, x, e1, 2.0, acc);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(acc[i] == doctest::Approx(2.0 * g.values()[i]));
}

TEST_CASE("param_distance") {
  Rng rng(2);
  const auto a = random_params({{3, 4}, 2}, rng);
  CHECK(param_distance(a, a) == 0.0);
  NetworkParams b = a;
  b.values()[5] += 3.0;
  CHECK(param_distance(a, b) == doctest::Approx(3.0));
  const auto c = random_params({{3, 4}, 2}, rng);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a.values()[i] - c.values()[i]) * (a.values()[i] - c.values()[i]);
  CHECK(param_distance(a, c) == doctest::Approx(std::sqrt(sq)));
  CHECK_THROWS_AS(param_distance(a, random_params({{3, 5}, 2}, rng)), StructuralError);
}

TEST_CASE("init_near") {
  Rng rng(4);
  const auto t = random_params({{4, 6, 6}, 2}, rng);
  CHECK(init_near(t, 0.0, 1) == t);
  const auto a = init_near(t, 0.1, 1), b = init_near(t, 0.1, 2);
  CHECK(param_distance(a, t) <= 0.1 + 1e-12);
  CHECK(param_distance(b, t) <= 0.1 + 1e-12);
  CHECK(param_distance(a, t) == doctest::Approx(0.1));
  CHECK(param_distance(a, b) > 0.0);
  CHECK(init_near(t, 0.1, 1) == a);
  CHECK_THROWS_AS(init_near(t, -1.0, 1), ValidationError);
}

TEST_CASE("random_params is seeded and He-scaled") {
  Rng r1(9), r2(9);
  CHECK(random_params({{8, 16}, 4}, r1) == random_params({{8, 16}, 4}, r2));
  Rng r3(1);
  const auto p = random_params({{200, 200}, 1}, r3);
  double sq = 0.0;
  for (double v : p.values()) sq += v * v;
  CHECK(sq / static_cast<double>(p.size()) == doctest::Approx(2.0 / 200.0).epsilon(0.05));
}

TEST_CASE("params binary round trip") {
  Rng rng(6);
  const auto p = random_params({{3, 4, 2}, 2}, rng);
  std::stringstream ss;
  write_params(ss, p);
  CHECK(read_params(ss) == p);
  std::stringstream bad("XXXX");
  CHECK_THROWS(read_params(bad));
}

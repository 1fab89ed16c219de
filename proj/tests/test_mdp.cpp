#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sfdqn/error.hpp"
#include "sfdqn/mdp.hpp"

using namespace sfdqn;

namespace {

MdpConfig small(std::uint64_t seed, std::size_t states = 20, double gamma = 0.9) {
  MdpConfig c;
  c.n_states = states;
  c.n_actions = 3;
  c.d_phi = 3;
  c.net = {{5, 8, 8}, 3};
  c.gamma = gamma;
  c.seed = seed;
  return c;
}

// Two states, one action, both rows deterministic or fixed.
SyntheticMdp two_state(const std::vector<double>& rows, double gamma = 0.5) {
  MdpConfig c;
  c.n_states = 2;
  c.n_actions = 1;
  c.d_phi = 1;
  c.net = {{2, 2}, 1};
  c.gamma = gamma;
  Eigen::MatrixXd x(2, 2);
  x << 1.0, 0.0, 0.0, 1.0;
  NetworkParams theta(c.net, {1.0, 0.5, 0.5, 1.0});
  return plant(c, rows, x, theta, Vector::Ones(1));
}

}  // namespace

TEST_CASE("config validation") {
  MdpConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_states = 1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = MdpConfig{};
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = MdpConfig{};
  c.d_phi = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = MdpConfig{};
  c.successors = 51;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("planted Bellman identity holds on every generated instance") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = generate(small(seed));
    CHECK(m.planted_bellman_residual() < 1e-10);
  }
  MdpConfig sparse = small(3);
  sparse.successors = 4;
  CHECK(generate(sparse).planted_bellman_residual() < 1e-10);
  CHECK(generate(MdpConfig{}).planted_bellman_residual() < 1e-10);
}

TEST_CASE("independent check of the planted identity") {
  const auto m = generate(small(4));
  const auto& psi = m.planted_sf();
  const auto& pi = m.planted_policy();
  double worst = 0.0;
  for (std::size_t s = 0; s < m.n_states(); ++s)
    for (std::size_t a = 0; a < m.n_actions(); ++a)
      for (std::size_t d = 0; d < m.d_phi(); ++d) {
        double rhs = 0.0;
        for (std::size_t sn = 0; sn < m.n_states(); ++sn)
          rhs += m.prob(s, a, sn) * (m.phi(s, a, sn)[static_cast<Eigen::Index>(d)] +
                                     m.gamma() * psi(static_cast<Eigen::Index>(m.pair(sn, pi[sn])), static_cast<Eigen::Index>(d)));
        worst = std::max(worst, std::abs(psi(static_cast<Eigen::Index>(m.pair(s, a)), static_cast<Eigen::Index>(d)) - rhs));
      }
  CHECK(worst < 1e-10);
  // psi* is the network output at the features
  for (std::size_t p = 0; p < m.n_pairs(); p += 7) {
    const auto ref = oracle::forward(m.planted_theta(), oracle::to_std(m.features().row(static_cast<Eigen::Index>(p)).transpose()));
    for (std::size_t d = 0; d < m.d_phi(); ++d)
      CHECK(psi(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d)) == doctest::Approx(ref[d]).epsilon(1e-12));
  }
}

TEST_CASE("gamma = 0 makes phi independent of the successor") {
  const auto m = generate(small(2, 10, 0.0));
  for (std::size_t s = 0; s < m.n_states(); ++s)
    for (std::size_t a = 0; a < m.n_actions(); ++a)
      for (std::size_t sn = 0; sn < m.n_states(); ++sn)
        CHECK((m.phi(s, a, sn) - m.planted_sf().row(static_cast<Eigen::Index>(m.pair(s, a))).transpose()).norm() == 0.0);
}

TEST_CASE("structural invariants and phi_max by enumeration") {
  MdpConfig c;
  c.seed = 7;
  const auto m = generate(c);
  double phi_max = 0.0, r_max = 0.0;
  for (std::size_t s = 0; s < m.n_states(); ++s)
    for (std::size_t a = 0; a < m.n_actions(); ++a) {
      double row = 0.0;
      CHECK(m.feature(s, a).norm() <= 1.0 + 1e-12);
      for (std::size_t sn = 0; sn < m.n_states(); ++sn) {
        row += m.prob(s, a, sn);
        CHECK(m.prob(s, a, sn) >= 0.0);
        phi_max = std::max(phi_max, m.phi(s, a, sn).norm());
        r_max = std::max(r_max, std::abs(m.reward(0, s, a, sn)));
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK(m.phi_max() == doctest::Approx(phi_max).epsilon(1e-14));
  CHECK(m.r_max() == doctest::Approx(r_max).epsilon(1e-14));
  CHECK(m.w(0).norm() == doctest::Approx(1.0));
}

TEST_CASE("generation is deterministic in the seed") {
  std::stringstream a, b, c;
  write_mdp(a, generate(small(5)));
  write_mdp(b, generate(small(5)));
  write_mdp(c, generate(small(6)));
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("plant validates its inputs") {
  CHECK_THROWS_AS(two_state({0.5, 0.6, 1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(two_state({1.0, 0.0}), StructuralError);
  CHECK_NOTHROW(two_state({0.0, 1.0, 1.0, 0.0}));
}

TEST_CASE("tasks") {
  auto m = generate(small(8));
  const std::size_t dup = add_perturbed_task(m, 0, 0.0, 3);
  CHECK(dup == 1);
  CHECK((m.w(1) - m.w(0)).norm() < 1e-15);
  const std::size_t t = add_perturbed_task(m, 0, 0.3, 4);
  CHECK(m.w(t).norm() == doctest::Approx(1.0));
  CHECK(m.task(t).base.value() == 0);
  CHECK(m.task(t).delta == 0.3);
  CHECK(m.task(t).realized_distance == doctest::Approx((m.w(t) - m.w(0)).norm()));
  // realized distance of a unit vector moved by 0.3 and renormalized is at most 0.3
  CHECK(m.task(t).realized_distance <= 0.3 + 1e-12);
  for (std::size_t s = 0; s < m.n_states(); ++s)
    for (std::size_t sn = 0; sn < m.n_states(); sn += 3)
      CHECK(m.reward(t, s, 1, sn) == doctest::Approx(m.phi(s, 1, sn).dot(m.w(t))).epsilon(1e-15));
  CHECK_THROWS_AS(add_task(m, Vector::Ones(2)), StructuralError);
  CHECK_THROWS_AS(add_perturbed_task(m, 0, -1.0, 1), ValidationError);
  CHECK_THROWS_AS(m.task(99), ValidationError);
}

TEST_CASE("step sampling") {
  const auto det = two_state({0.0, 1.0, 1.0, 0.0});
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(step(det, 0, 0, 0, rng).s_next == 1);

  const auto mix = two_state({0.3, 0.7, 1.0, 0.0});
  Rng r2(2);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto tr = step(mix, 0, 0, 0, r2);
    ones += tr.s_next == 1;
    CHECK(tr.reward == mix.reward(0, 0, 0, tr.s_next));
  }
  CHECK(std::abs(static_cast<double>(ones) / n - 0.7) < 0.01);
  CHECK_THROWS_AS(step(mix, 0, 2, 0, r2), ValidationError);
}

TEST_CASE("tabular solver agrees with planted solution and scalar value iteration") {
  const auto m = generate(small(9));
  const auto sol = tabular_sf_solve(m, m.w(0), 1e-11);
  const Vector qstar = m.planted_sf() * m.w(0);
  for (std::size_t s = 0; s < m.n_states(); ++s)
    for (std::size_t a = 0; a < m.n_actions(); ++a)
      CHECK(sol.q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) ==
            doctest::Approx(qstar[static_cast<Eigen::Index>(m.pair(s, a))]).epsilon(1e-9));

  Rng rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 3; ++trial) {
    Vector w(3);
    for (auto& v : w) v = n(rng);
    const auto tol = 1e-10;
    const auto ts = tabular_sf_solve(m, w, tol);
    const auto vi = oracle::value_iteration(m, w);
    double err = 0.0;
    for (std::size_t p = 0; p < m.n_pairs(); ++p)
      err = std::max(err, std::abs(ts.q(static_cast<Eigen::Index>(p / 3), static_cast<Eigen::Index>(p % 3)) - vi[p]));
    CHECK(err < 2 * tol);
    CHECK(ts.q_residual < 1e-9);
  }
  CHECK_THROWS_AS(tabular_sf_solve(m, m.w(0), 1e-12, 1), ConvergenceError);
}

TEST_CASE("gamma = 0 Q is the expected immediate reward") {
  const auto m = generate(small(10, 10, 0.0));
  const auto sol = tabular_sf_solve(m, m.w(0));
  const auto r = oracle::expected_reward(m, m.w(0));
  for (std::size_t p = 0; p < m.n_pairs(); ++p)
    CHECK(sol.q(static_cast<Eigen::Index>(p / 3), static_cast<Eigen::Index>(p % 3)) == doctest::Approx(r[p]).epsilon(1e-12));
}

TEST_CASE("policy evaluation and normalized return") {
  const auto m = generate(small(12));
  Rng rng(4);
  std::vector<std::size_t> pi(m.n_states());
  for (auto& a : pi) a = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  const auto q = evaluate_policy(m, m.w(0), pi);
  const auto ref = oracle::policy_evaluation(m, m.w(0), pi);
  for (std::size_t p = 0; p < m.n_pairs(); ++p)
    CHECK(q(static_cast<Eigen::Index>(p / 3), static_cast<Eigen::Index>(p % 3)) == doctest::Approx(ref[p]).epsilon(1e-10));

  const auto scale = return_scale(m, m.w(0));
  CHECK(scale.optimal >= scale.worst);
  const auto opt = tabular_sf_solve(m, m.w(0)).policy;
  CHECK(normalized_return(m, m.w(0), opt, scale) == doctest::Approx(1.0));
  const double nr = normalized_return(m, m.w(0), pi, scale);
  CHECK(nr >= 0.0);
  CHECK(nr <= 1.0);
  // worst values are dominated by every deterministic policy value
  const Vector worst = worst_values(m, m.w(0));
  for (std::size_t s = 0; s < m.n_states(); ++s) CHECK(worst[static_cast<Eigen::Index>(s)] <= ref[m.pair(s, pi[s])] + 1e-9);
}

TEST_CASE("greedy policy ties go to the lowest action") {
  QTable q(2, 3);
  q << 1, 1, 0, 0, 2, 2;
  const auto pi = greedy_policy(q);
  CHECK(pi[0] == 0);
  CHECK(pi[1] == 1);
}

TEST_CASE("archive round trip") {
  auto m = generate(small(13));
  add_perturbed_task(m, 0, 0.5, 2);
  std::stringstream ss;
  write_mdp(ss, m);
  const auto back = read_mdp(ss);
  CHECK(back.n_tasks() == 2);
  CHECK(back.w(1) == m.w(1));
  CHECK(back.planted_theta() == m.planted_theta());
  CHECK(back.phi_max() == m.phi_max());
  std::stringstream again;
  write_mdp(again, back);
  CHECK(again.str() == ss.str());
  std::stringstream junk("not an archive");
  CHECK_THROWS(read_mdp(junk));
}

#include <doctest.h>

#include <cmath>
#include <limits>

#include "sfdqn/error.hpp"
#include "sfdqn/policy.hpp"

using namespace sfdqn;

namespace {
MdpConfig tiny(std::uint64_t seed) {
  MdpConfig c;
  c.n_states = 10;
  c.n_actions = 3;
  c.d_phi = 2;
  c.net = {{4, 6}, 2};
  c.seed = seed;
  return c;
}
}  // namespace

TEST_CASE("epsilon schedule") {
  const EpsilonSchedule e{1.0, 0.1, 0.5};
  CHECK(e.at(0, 100) == doctest::Approx(1.0));
  CHECK(e.at(25, 100) == doctest::Approx(0.55));
  CHECK(e.at(50, 100) == doctest::Approx(0.1));
  CHECK(e.at(99, 100) == doctest::Approx(0.1));
  CHECK(EpsilonSchedule{0.3, 0.3, 0.0}.at(5, 10) == doctest::Approx(0.3));
  CHECK_THROWS_AS((EpsilonSchedule{1.5, 0.1, 0.2}.validate()), ValidationError);
  CHECK_THROWS_AS((EpsilonSchedule{1.0, 0.1, 2.0}.validate()), ValidationError);
  CHECK_THROWS_AS(PolicySpec::softmax(0.0).validate(), ValidationError);
}

TEST_CASE("greedy selection") {
  Rng rng(1);
  const std::vector<double> q{1, 3, 2};
  CHECK(select_action(q, PolicySpec::greedy(), rng) == 1);
  CHECK(argmax(std::vector<double>{2, 2, 1}) == 0);
  const std::vector<double> nan{1, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(select_action(nan, PolicySpec::greedy(), rng), ValidationError);
  CHECK_THROWS_AS(select_action(std::vector<double>{}, PolicySpec::greedy(), rng), ValidationError);
}

TEST_CASE("greedy is invariant under shifts and positive scaling") {
  Rng rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(5), shifted(5), scaled(5);
    for (std::size_t i = 0; i < 5; ++i) {
      q[i] = n(rng);
      shifted[i] = q[i] + 3.7;
      scaled[i] = 2.5 * q[i];
    }
    const auto a = select_action(q, PolicySpec::greedy(), rng);
    CHECK(select_action(shifted, PolicySpec::greedy(), rng) == a);
    CHECK(select_action(scaled, PolicySpec::greedy(), rng) == a);
  }
}

TEST_CASE("epsilon = 1 is uniform") {
  Rng rng(3);
  const std::vector<double> q{0, 10, 0, 0};
  std::vector<int> count(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++count[select_action(q, PolicySpec::constant_epsilon(1.0), rng)];
  for (int c : count) CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.01);
}

TEST_CASE("softmax at low temperature picks the argmax") {
  Rng rng(4);
  const std::vector<double> q{0.1, 0.5, 0.4};
  std::vector<int> count(3, 0);
  for (int i = 0; i < 10000; ++i) ++count[select_action(q, PolicySpec::softmax(1e-3), rng)];
  CHECK(count[1] > count[0]);
  CHECK(count[1] > count[2]);
  CHECK(count[1] == 10000);
  // temperature 1: ratio of frequencies follows exp(q_i - q_j)
  std::vector<int> c2(3, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++c2[select_action(q, PolicySpec::softmax(1.0), rng)];
  CHECK(static_cast<double>(c2[1]) / c2[0] == doctest::Approx(std::exp(0.4)).epsilon(0.03));
}

TEST_CASE("q_values_gpi") {
  const auto m = generate(tiny(1));
  Rng rng(5);
  const NetworkParams a = random_params(m.config().net, rng), b = random_params(m.config().net, rng),
                      c = random_params(m.config().net, rng);
  const Vector w = m.w(0);
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    const std::vector<NetworkParams> one{a}, two{a, a}, three{a, b, c}, sub{a, b};
    const Vector q1 = q_values_gpi(one, w, m, s);
    CHECK((q_values_gpi(two, w, m, s) - q1).cwiseAbs().maxCoeff() == 0.0);
    const Vector q3 = q_values_gpi(three, w, m, s);
    const Vector qs = q_values_gpi(sub, w, m, s);
    for (std::size_t act = 0; act < m.n_actions(); ++act) {
      const auto x = m.feature(s, act);
      CHECK(q1[static_cast<Eigen::Index>(act)] == doctest::Approx(forward_sf(a, x).dot(w)));
      const double ref = std::max({forward_sf(a, x).dot(w), forward_sf(b, x).dot(w), forward_sf(c, x).dot(w)});
      CHECK(q3[static_cast<Eigen::Index>(act)] == doctest::Approx(ref));
      CHECK(q3[static_cast<Eigen::Index>(act)] >= qs[static_cast<Eigen::Index>(act)]);
    }
  }
  CHECK_THROWS(q_values_gpi(std::span<const NetworkParams>{}, w, m, 0));
}

TEST_CASE("policy mismatch") {
  QTable a(4, 2), b(4, 2);
  a << 1, 0, 1, 0, 0, 1, 0, 1;
  b = -a;
  CHECK(policy_mismatch(a, a) == 0.0);
  CHECK(policy_mismatch(a, b) == 1.0);
  Rng rng(6);
  std::normal_distribution<double> n;
  QTable x(50, 4), y(50, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = n(rng);
    y.data()[i] = n(rng);
  }
  int diff = 0;
  for (Eigen::Index s = 0; s < 50; ++s) {
    Eigen::Index ia, ib;
    x.row(s).maxCoeff(&ia);
    y.row(s).maxCoeff(&ib);
    diff += ia != ib;
  }
  CHECK(policy_mismatch(x, y) == doctest::Approx(diff / 50.0));
  CHECK_THROWS(policy_mismatch(x, QTable(3, 4)));
}

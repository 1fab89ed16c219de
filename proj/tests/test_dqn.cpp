#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sfdqn/dqn.hpp"
#include "sfdqn/error.hpp"

using namespace sfdqn;

namespace {
MdpConfig env(std::uint64_t seed, double gamma = 0.9) {
  MdpConfig c;
  c.n_states = 20;
  c.n_actions = 4;
  c.d_phi = 4;
  c.net = {{8, 16, 16}, 4};
  c.gamma = gamma;
  c.seed = seed;
  return c;
}
}  // namespace

TEST_CASE("parameter parity with one SF network") {
  const NetworkShape sf{{8, 16, 16}, 4};
  const auto d = dqn_shape(sf);
  CHECK(d.head_dim == 2);
  CHECK(d.widths.front() == 8);
  CHECK(std::abs(static_cast<double>(d.size()) - static_cast<double>(sf.size())) <= 0.05 * static_cast<double>(sf.size()));
  for (const NetworkShape s : {NetworkShape{{5, 7}, 3}, NetworkShape{{8, 1}, 4}, NetworkShape{{6, 12, 12}, 2}}) {
    const auto q = dqn_shape(s);
    CHECK(std::abs(static_cast<double>(q.size()) - static_cast<double>(s.size())) <= 0.05 * static_cast<double>(s.size()));
  }
}

TEST_CASE("dqn_value is the difference of the two trunks") {
  const auto m = generate(env(1));
  TrainerConfig cfg;
  const auto q = dqn_initial(m, 0, cfg);
  const QTable t = dqn_q_table(q, m);
  for (std::size_t s = 0; s < m.n_states(); s += 3)
    for (std::size_t a = 0; a < m.n_actions(); ++a) {
      const auto ref = oracle::forward(q, oracle::to_std(m.feature(s, a)));
      CHECK(t(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) == doctest::Approx(ref[0] - ref[1]).epsilon(1e-13));
      CHECK(dqn_value(q, m.feature(s, a)) == t(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)));
    }
  CHECK_THROWS_AS(dqn_value(m.planted_theta(), m.feature(0, 0)), StructuralError);
}

TEST_CASE("dqn_gpi_q") {
  const auto m = generate(env(2));
  TrainerConfig cfg;
  const auto a = dqn_initial(m, 0, cfg), b = dqn_initial(m, 1, cfg), c = dqn_initial(m, 2, cfg);
  const std::vector<NetworkParams> one{a}, dup{a, a}, three{a, b, c}, sub{a, c};
  CHECK(dqn_gpi_q(one, m) == dqn_q_table(a, m));
  CHECK(dqn_gpi_q(dup, m) == dqn_q_table(a, m));
  const QTable q3 = dqn_gpi_q(three, m);
  CHECK(q3 == dqn_q_table(a, m).cwiseMax(dqn_q_table(b, m)).cwiseMax(dqn_q_table(c, m)));
  CHECK((q3 - dqn_gpi_q(sub, m)).minCoeff() >= 0.0);
}

TEST_CASE("eta = 0 leaves the network unchanged; same seed gives identical logs") {
  const auto m = generate(env(3));
  TrainerConfig cfg;
  cfg.iterations = 40;
  cfg.eval_every = 10;
  cfg.eta = {StepSchedule::Kind::constant, 0.0, 0.0};
  const auto q0 = dqn_initial(m, 0, cfg);
  CHECK(dqn_train(m, 0, cfg).q_net == q0);

  cfg.eta = {StepSchedule::Kind::inverse_time, 0.5, 10.0};
  const auto a = dqn_train(m, 0, cfg), b = dqn_train(m, 0, cfg);
  CHECK(a.q_net == b.q_net);
  REQUIRE(a.log.rows.size() == 40);
  CHECK(a.log.agent == "dqn");
  for (std::size_t t = 0; t < 40; ++t) {
    CHECK(a.log.rows[t].td_residual == b.log.rows[t].td_residual);
    CHECK(a.log.rows[t].w_error == 0.0);
    CHECK(a.log.rows[t].theta_error == a.log.rows[t].q_error);
  }
}

TEST_CASE("gamma = 0: Q approaches the immediate reward table") {
  const auto m = generate(env(4, 0.0));
  TrainerConfig cfg;
  cfg.iterations = 4000;
  cfg.eval_every = 200;
  cfg.eta = {StepSchedule::Kind::constant, 0.1, 0.0};
  cfg.policy = PolicySpec::constant_epsilon(1.0);
  cfg.seed = 2;
  const auto r = dqn_train(m, 0, cfg);
  const auto reward = oracle::expected_reward(m, m.w(0));
  const QTable q = dqn_q_table(r.q_net, m);
  double err = 0.0;
  for (std::size_t p = 0; p < m.n_pairs(); ++p)
    err = std::max(err, std::abs(q(static_cast<Eigen::Index>(p / 4), static_cast<Eigen::Index>(p % 4)) - reward[p]));
  CHECK(err < 0.1 * m.r_max());
}

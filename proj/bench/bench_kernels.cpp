#include <vector>

#include <benchmark/benchmark.h>

#include "sfdqn/kernels.hpp"
#include "sfdqn/mdp.hpp"
#include "sfdqn/network.hpp"
#include "sfdqn/rng.hpp"

using namespace sfdqn;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(1) ? Exec::parallel : Exec::serial; }

NetworkParams bench_net(std::size_t width) {
  Rng rng(1);
  return random_params(NetworkShape{{8, width, width}, 4}, rng);
}

Eigen::MatrixXd bench_inputs(Eigen::Index rows) {
  Rng rng(2);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd X(rows, 8);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng);
  return X;
}

void BM_batch_forward(benchmark::State& state) {
  const auto p = bench_net(64);
  const auto X = bench_inputs(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(batch_forward(p, X, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_batch_backward(benchmark::State& state) {
  const auto p = bench_net(64);
  const auto X = bench_inputs(state.range(0));
  const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(X.rows(), 4);
  std::vector<double> out(p.values().size());
  for (auto _ : state) {
    batch_backward(p, X, up, 1.0, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_sf_table(benchmark::State& state) {
  MdpConfig c;
  c.n_states = static_cast<std::size_t>(state.range(0));
  c.seed = 3;
  const auto m = generate(c);
  const auto& p = m.planted_theta();
  for (auto _ : state) benchmark::DoNotOptimize(sf_table(p, m, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0) * static_cast<long>(c.n_actions));
}

}  // namespace

BENCHMARK(BM_batch_forward)->ArgsProduct({{32, 1024}, {0, 1}});
BENCHMARK(BM_batch_backward)->ArgsProduct({{32, 1024}, {0, 1}});
BENCHMARK(BM_sf_table)->ArgsProduct({{50, 500}, {0, 1}});

BENCHMARK_MAIN();

// Serial reference kernel against the OpenMP kernel on the same model.
#include <benchmark/benchmark.h>

#include "npn/checks.hpp"
#include "npn/likelihood.hpp"

namespace {

struct Fixture {
  npn::Dataset data;
  npn::ModelSpec spec;
};

Fixture make(npn::Flavour flavour, std::size_t N) {
  Eigen::MatrixXd R(3, 3);
  R << 1, 0.5, 0.3, 0.5, 1, 0.4, 0.3, 0.4, 1;
  Fixture f;
  f.data = npn::checks::continuous_dataset(npn::checks::gaussian_sample(N, R, 3));
  f.spec.flavour = flavour;
  f.spec.qmc.M = 1000;
  for (std::size_t j = 0; j < 3; ++j)
    f.spec.margins.push_back(flavour == npn::Flavour::Npn ? npn::MarginalSpec{}
                                                          : npn::bernstein_for(f.data.column(j), 6));
  return f;
}

void run(benchmark::State& state, npn::Flavour flavour, npn::ExecPolicy policy) {
  const Fixture f = make(flavour, static_cast<std::size_t>(state.range(0)));
  const npn::Model m(f.spec, f.data);
  Eigen::VectorXd x = m.encode(m.default_start());
  x.tail(3) << -0.4, 0.2, -0.3;
  Eigen::VectorXd g;
  for (auto _ : state) benchmark::DoNotOptimize(m.loglik(x, &g, nullptr, policy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_NpnSerial(benchmark::State& s) { run(s, npn::Flavour::Npn, npn::ExecPolicy::Serial); }
void BM_NpnParallel(benchmark::State& s) { run(s, npn::Flavour::Npn, npn::ExecPolicy::Parallel); }
void BM_FlowSerial(benchmark::State& s) { run(s, npn::Flavour::Flow, npn::ExecPolicy::Serial); }
void BM_FlowParallel(benchmark::State& s) { run(s, npn::Flavour::Flow, npn::ExecPolicy::Parallel); }

}  // namespace

BENCHMARK(BM_NpnSerial)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NpnParallel)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowSerial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowParallel)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

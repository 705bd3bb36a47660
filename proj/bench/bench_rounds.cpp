// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "fedsim/orchestrator.hpp"

using namespace fedsim;

namespace {

ExperimentConfig bench_cfg(double rate) {
  ExperimentConfig cfg = benchmark_config(Method::kFedLada);
  cfg.rate = rate;
  cfg.seeds = {1};
  return cfg;
}

void BM_ClientExecution(benchmark::State& st) {
  const auto mode = st.range(0) ? Execution::kParallel : Execution::kSerial;
  const ExperimentConfig cfg = bench_cfg(0.5);
  Simulation sim(cfg, 1);
  const auto participants = sample_participants(cfg.clients, cfg.participants(), 1, 0);
  for (auto _ : st) {
    auto res = execute_clients(sim.federation(), cfg, sim.state(), participants, 1, mode);
    benchmark::DoNotOptimize(res);
  }
}
BENCHMARK(BM_ClientExecution)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMicrosecond);

void BM_FullGrad(benchmark::State& st) {
  const ExperimentConfig cfg = bench_cfg(0.1);
  Simulation sim(cfg, 1);
  const Federation& fed = sim.federation();
  for (auto _ : st) {
    ParamVector g = st.range(0) ? full_grad(fed.model(), sim.state().x, fed.train())
                                : full_grad_serial(fed.model(), sim.state().x, fed.train());
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_FullGrad)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMicrosecond);

void BM_Round(benchmark::State& st) {
  const auto mode = st.range(0) ? Execution::kParallel : Execution::kSerial;
  ExperimentConfig cfg = bench_cfg(0.5);
  cfg.rounds = 1 << 20;
  Simulation sim(cfg, 1);
  for (auto _ : st) {
    auto out = sim.step(mode);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_Round)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

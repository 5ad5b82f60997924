#include <benchmark/benchmark.h>

#include "cgpnas/evaluator.hpp"
#include "cgpnas/evolution.hpp"
#include "cgpnas/genotype.hpp"

namespace {

using namespace cgpnas;

// The surrogate keeps these benchmarks about the evolution machinery itself
// (mutation, signature comparison, selection), not about network training.

void BM_InitEvolution(benchmark::State& state) {
  const CgpConfig cfg;
  const SurrogateEvaluator ev("target_active_count(25)");
  EvolutionOptions opts;
  opts.seed = 42;
  for (auto _ : state) benchmark::DoNotOptimize(init_evolution(cfg, ev, opts));
}
BENCHMARK(BM_InitEvolution);

void BM_EvolutionStep(benchmark::State& state) {
  const CgpConfig cfg;
  const SurrogateEvaluator ev("target_active_count(25)");
  EvolutionOptions opts;
  opts.seed = 42;
  opts.lambda = static_cast<int>(state.range(0));
  EvolutionState st = init_evolution(cfg, ev, opts);
  for (auto _ : state) {
    step(st, ev);
    benchmark::DoNotOptimize(st.parent);
  }
}
BENCHMARK(BM_EvolutionStep)->Arg(2)->Arg(8);

}  // namespace

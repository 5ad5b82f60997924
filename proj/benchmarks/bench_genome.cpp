#include <benchmark/benchmark.h>

#include "cgpnas/genotype.hpp"
#include "cgpnas/graph.hpp"
#include "cgpnas/rng.hpp"

namespace {

using namespace cgpnas;

// All genome benchmarks run on the default 5x30 grid with the full
// three-channel Conv catalog, the same configuration a search uses.

void BM_RandomGenotype(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  for (auto _ : state) benchmark::DoNotOptimize(random_genotype(cfg, rng));
}
BENCHMARK(BM_RandomGenotype);

void BM_PointMutation(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  Genotype g = random_genotype(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(point_mutation(g, rng));
}
BENCHMARK(BM_PointMutation);

// Chains the offspring back into the parent slot so the walk stays inside
// the active-count window the same way a real run does.
void BM_ForcedMutation(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  Genotype g = random_genotype(cfg, rng);
  for (auto _ : state) {
    g = forced_mutation(g, rng);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_ForcedMutation);

void BM_NeutralMutation(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  Genotype g = random_genotype(cfg, rng);
  for (auto _ : state) {
    g = neutral_mutation(g, rng);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_NeutralMutation);

void BM_ActiveNodes(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  const Genotype g = random_genotype(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(active_nodes(g));
}
BENCHMARK(BM_ActiveNodes);

void BM_PhenotypeSignature(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  const Genotype g = random_genotype(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(phenotype_signature(g));
}
BENCHMARK(BM_PhenotypeSignature);

void BM_Decode(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  const Genotype g = random_genotype(cfg, rng);
  const Catalog cat = cfg.make_catalog();
  for (auto _ : state) benchmark::DoNotOptimize(decode(g, cat, 10));
}
BENCHMARK(BM_Decode);

void BM_SerializeParse(benchmark::State& state) {
  const CgpConfig cfg;
  RngStream rng(42);
  const Genotype g = random_genotype(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(parse_genotype(serialize(g)));
}
BENCHMARK(BM_SerializeParse);

}  // namespace

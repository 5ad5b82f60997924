// Acceptance gate: one criterion per command-line argument, one
// [PASS]/[FAIL] line each, nonzero exit when anything failed. Criteria
// carry their own runtime budgets; blowing a budget fails the criterion
// even when every property held.
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgpnas/data.hpp"
#include "cgpnas/errors.hpp"
#include "cgpnas/evaluator.hpp"
#include "cgpnas/evolution.hpp"
#include "cgpnas/gradcheck.hpp"
#include "cgpnas/graph.hpp"
#include "cgpnas/network.hpp"
#include "cgpnas/run_config.hpp"
#include "test_helpers.hpp"

using namespace cgpnas;
using cgpnas::testutil::chain_genotype;
using cgpnas::testutil::oracle_shape;

namespace {

Genotype simple_chain(const CgpConfig& base, const std::vector<int>& function_ids) {
  std::vector<std::array<int, 2>> wiring;
  for (std::size_t i = 0; i < function_ids.size(); ++i)
    wiring.push_back({static_cast<int>(i), static_cast<int>(i)});
  return chain_genotype(base, function_ids, wiring);
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

// Connectivity law restated from the grid definition: node ids are
// column-major with inputs in column 0; a node in column c may read any
// primary input, or a grid node of columns [c - levels_back, c - 1].
bool connections_lawful(const Genotype& g) {
  const CgpConfig& cfg = g.config;
  const int catalog_size = cfg.make_catalog().size();
  for (int id = cfg.n_inputs; id < cfg.node_count(); ++id) {
    const int col = (id - cfg.n_inputs) / cfg.n_rows + 1;
    const NodeGene& gene = g.gene_of(id);
    if (gene.function_id < 0 || gene.function_id >= catalog_size) return false;
    for (const int in : gene.inputs) {
      if (in < 0 || in >= cfg.node_count()) return false;
      if (in < cfg.n_inputs) continue;  // primary inputs reachable everywhere
      const int in_col = (in - cfg.n_inputs) / cfg.n_rows + 1;
      if (in_col >= col || in_col < col - cfg.levels_back) return false;
    }
  }
  for (const int out : g.output_genes)
    if (out < 0 || out >= cfg.node_count()) return false;
  return true;
}

bool check_genome_laws(std::string& detail) {
  const double t0 = now_seconds();
  CgpConfig cfg;  // published defaults: 5x30 grid, levels-back 10, 10..50 active
  RngStream rng = RngStream::derive(977, 0, 0);

  int lawful = 0, windowed = 0;
  const int genotypes = 10000;
  for (int i = 0; i < genotypes; ++i) {
    const Genotype g = random_genotype(cfg, rng);
    lawful += connections_lawful(g) ? 1 : 0;
    const std::size_t active = active_nodes(g).size();
    windowed += (active >= 10 && active <= 50) ? 1 : 0;
  }

  int neutral_ok = 0, forced_ok = 0;
  const int trials = 1000;
  const Catalog catalog = cfg.make_catalog();
  for (int i = 0; i < trials; ++i) {
    const Genotype parent = random_genotype(cfg, rng);
    const Genotype drifted = neutral_mutation(parent, rng);
    const bool same_graph =
        phenotype_signature(drifted) == phenotype_signature(parent) &&
        to_json(decode(drifted, catalog)) == to_json(decode(parent, catalog));
    neutral_ok += same_graph ? 1 : 0;
    const Genotype forced = forced_mutation(parent, rng);
    forced_ok +=
        phenotype_signature(forced) != phenotype_signature(parent) ? 1 : 0;
  }

  const double elapsed = now_seconds() - t0;
  std::ostringstream d;
  d << lawful << "/" << genotypes << " lawful, " << windowed << "/" << genotypes
    << " in window, neutral " << neutral_ok << "/" << trials << ", forced "
    << forced_ok << "/" << trials << ", " << elapsed << "s";
  detail = d.str();
  return lawful == genotypes && windowed == genotypes && neutral_ok == trials &&
         forced_ok == trials && elapsed < 30.0;
}

bool check_shape_algebra(std::string& detail) {
  const double t0 = now_seconds();
  std::vector<FunctionSpec> specs;
  for (const FunctionSet set : {FunctionSet::Conv, FunctionSet::Res})
    for (const FunctionSpec& f : Catalog::build(set).entries())
      if (std::find(specs.begin(), specs.end(), f) == specs.end())
        specs.push_back(f);

  std::vector<TensorShape> shapes;
  for (int m = 1; m <= 8; ++m)
    for (int n = 1; n <= 8; ++n)
      for (const int c : {1, 2, 3, 32}) shapes.push_back({m, n, c});

  long long checked = 0, mismatches = 0;
  for (const FunctionSpec& f : specs) {
    if (f.arity == 1) {
      for (const TensorShape& a : shapes) {
        ++checked;
        if (output_shape(f, a) != oracle_shape(f, a)) ++mismatches;
      }
    } else {
      for (const TensorShape& a : shapes)
        for (const TensorShape& b : shapes) {
          ++checked;
          if (output_shape(f, a, b) != oracle_shape(f, a, b)) ++mismatches;
        }
    }
  }

  const double elapsed = now_seconds() - t0;
  std::ostringstream d;
  d << checked << " cases over " << specs.size() << " functions, " << mismatches
    << " mismatches, " << elapsed << "s";
  detail = d.str();
  return mismatches == 0 && elapsed < 10.0;
}

GraphNode fn_node(FunctionKind kind, int arity, int co, int k, int in0, int in1 = -1) {
  GraphNode n;
  n.kind = GraphNodeKind::Function;
  n.fn = {kind, arity, co, k};
  n.inputs = {in0, in1};
  return n;
}

bool check_gradient_correctness(std::string& detail) {
  const double t0 = now_seconds();
  // Every node kind plus the classifier head, both residual shortcut
  // directions, Sum channel padding, Concat spatial alignment.
  LayerGraph g;
  g.n_inputs = 1;
  g.class_count = 3;
  GraphNode input;
  input.kind = GraphNodeKind::Input;
  g.nodes.push_back(input);
  g.nodes.push_back(fn_node(FunctionKind::ConvBlock, 1, 8, 3, 0));
  g.nodes.push_back(fn_node(FunctionKind::MaxPool, 1, 0, 0, 1));
  g.nodes.push_back(fn_node(FunctionKind::ResBlock, 1, 4, 3, 2));
  g.nodes.push_back(fn_node(FunctionKind::ResBlock, 1, 16, 5, 3));
  g.nodes.push_back(fn_node(FunctionKind::AvgPool, 1, 0, 0, 1));
  g.nodes.push_back(fn_node(FunctionKind::Sum, 2, 0, 0, 4, 5));
  g.nodes.push_back(fn_node(FunctionKind::Concat, 2, 0, 0, 6, 0));
  GraphNode head;
  head.kind = GraphNodeKind::Output;
  head.inputs = {7, -1};
  g.nodes.push_back(head);
  g = infer_shapes(g, {12, 12, 2});

  RngStream init = RngStream::derive(31, 0, 0);
  Network<double> net(g, init);
  RngStream data_rng = RngStream::derive(31, 0, 1);
  Tensor4<double> x(3, g.nodes[0].shape);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = data_rng.normal();

  RngStream pick = RngStream::derive(31, 0, 2);
  const GradCheckReport report = grad_check(net, x, {0, 2, 1}, 240, 1e-5, pick);

  const double elapsed = now_seconds() - t0;
  std::ostringstream d;
  d << report.checked << " params, max rel " << report.max_rel_error << " at "
    << report.worst_param << ", " << elapsed << "s";
  detail = d.str();
  return report.checked >= 200 && report.max_rel_error < 1e-3 && elapsed < 60.0;
}

bool check_elitism(std::string& detail) {
  const SurrogateEvaluator ev("target_active_count(25)");
  CgpConfig cfg;
  int monotone_runs = 0;
  const int runs = 20, generations = 100;
  for (int seed = 1; seed <= runs; ++seed) {
    const EvolutionState state = evolve(cfg, ev, generations, {2, static_cast<std::uint64_t>(seed)});
    bool monotone = state.history.size() == static_cast<std::size_t>(generations) + 1;
    for (std::size_t i = 1; i < state.history.size(); ++i)
      if (state.history[i].parent_fitness < state.history[i - 1].parent_fitness)
        monotone = false;
    monotone_runs += monotone ? 1 : 0;
  }
  std::ostringstream d;
  d << monotone_runs << "/" << runs << " runs of " << generations
    << " generations monotone";
  detail = d.str();
  return monotone_runs == runs;
}

bool check_search_effectiveness(std::string& detail) {
  const double t0 = now_seconds();
  const SurrogateEvaluator ev("target_active_count(25)");
  CgpConfig cfg;
  int hits = 0;
  std::ostringstream finals;
  for (int seed = 1; seed <= 10; ++seed) {
    const EvolutionState state = evolve(cfg, ev, 200, {2, static_cast<std::uint64_t>(seed)});
    const int active = state.history.back().parent_active_count;
    finals << (seed > 1 ? "," : "") << active;
    hits += std::abs(active - 25) <= 2 ? 1 : 0;
  }
  const double elapsed = now_seconds() - t0;
  std::ostringstream d;
  d << hits << "/10 seeds within 2 nodes of 25 (finals " << finals.str() << "), "
    << elapsed << "s";
  detail = d.str();
  return hits >= 8 && elapsed < 120.0;
}

bool check_desk_pipeline(std::string& detail) {
  const double t0 = now_seconds();
  const RunConfig cfg = scenario_preset("desk");
  const Dataset all = synthetic_dataset(cfg.synthetic, cfg.synthetic_seed);
  auto [train, val] = split(all, {cfg.split_train, cfg.split_val, cfg.split_seed});
  mean_subtract(train, {&val});
  const TrainingEvaluator ev(train, val, cfg.search,
                             TrainingLimits{cfg.memory_budget});

  int improved = 0;
  std::ostringstream deltas;
  for (int seed = 1; seed <= 5; ++seed) {
    const EvolutionState state =
        evolve(cfg.cgp, ev, cfg.generations, {cfg.lambda, static_cast<std::uint64_t>(seed)});
    const double init = state.history.front().parent_fitness;
    const double final_fitness = state.history.back().parent_fitness;
    deltas << (seed > 1 ? "," : "") << final_fitness - init;
    improved += final_fitness - init >= 0.10 ? 1 : 0;
  }
  const double elapsed = now_seconds() - t0;
  std::ostringstream d;
  d << improved << "/5 seeds improved by >= 0.10 (deltas " << deltas.str() << "), "
    << elapsed << "s";
  detail = d.str();
  return improved >= 4 && elapsed < 1800.0;
}

bool check_training_protocol(std::string& detail) {
  const TrainConfig search = search_defaults();
  const TrainConfig retrain = retrain_defaults();
  bool ok = true;
  // search: 0.01 through epoch 29, one 10x cut at epoch 30
  ok = ok && lr_at(search, 1) == 0.01 && lr_at(search, 29) == 0.01 &&
       lr_at(search, 30) == 0.001 && lr_at(search, 50) == 0.001;
  // retrain: 0.01 warmup, 0.1 from 5, 0.01 from 250, 0.001 from 375
  ok = ok && lr_at(retrain, 1) == 0.01 && lr_at(retrain, 4) == 0.01 &&
       lr_at(retrain, 5) == 0.1 && lr_at(retrain, 249) == 0.1 &&
       lr_at(retrain, 250) == 0.01 && lr_at(retrain, 374) == 0.01 &&
       lr_at(retrain, 375) == 0.001 && lr_at(retrain, 500) == 0.001;

  // the peak at epoch 35 sits outside the trailing-10 window of a 50-epoch
  // trace and must not count
  std::vector<double> trace(50);
  for (int e = 0; e < 50; ++e) trace[static_cast<std::size_t>(e)] = 0.5 + 0.004 * e;
  trace[34] = 0.93;
  trace[44] = 0.82;
  ok = ok && fitness_from_trace(trace, 10) == 0.82;
  ok = ok && fitness_from_trace({0.4, 0.6}, 10) == 0.6;  // short trace clamps

  detail = ok ? "both schedules exact at all change points; window rule holds"
              : "schedule or window mismatch";
  return ok;
}

bool check_zero_fitness(std::string& detail) {
  CgpConfig tiny;
  tiny.channels = {8};  // catalog: CB(8,3)=0, CB(8,5)=1, MP=2, AP=3, Sum=4, Concat=5
  const Dataset all = synthetic_dataset({2, 300, 8, Difficulty::Easy}, 5);
  auto [train, val] = split(all, {240, 60, 1});
  mean_subtract(train, {&val});
  TrainConfig fast = search_defaults();
  fast.epochs = 1;
  fast.augmentation = false;

  bool ok = true;
  std::ostringstream d;

  // four halvings take 8x8 below 1x1
  const TrainingEvaluator plain(train, val, fast);
  const FitnessResult bad_shape =
      plain.evaluate(simple_chain(tiny, {2, 2, 2, 2}), RngStream::derive(1, 0, 0));
  ok = ok && bad_shape.fitness == 0.0 &&
       bad_shape.reason == FailureReason::InvalidArchitecture;
  d << "shape failure -> " << failure_name(bad_shape.reason);

  const TrainingEvaluator capped(train, val, fast, TrainingLimits{1 << 16});
  const FitnessResult too_big =
      capped.evaluate(simple_chain(tiny, {0, 1}), RngStream::derive(1, 0, 0));
  ok = ok && too_big.fitness == 0.0 &&
       too_big.reason == FailureReason::OutOfMemoryBudget;
  d << ", 64KiB budget -> " << failure_name(too_big.reason);

  // a run over a fault-heavy space must reach its generation budget
  const RunConfig desk = scenario_preset("desk");
  const Dataset desk_all = synthetic_dataset(desk.synthetic, desk.synthetic_seed);
  auto [dtrain, dval] = split(desk_all, {desk.split_train, desk.split_val, desk.split_seed});
  mean_subtract(dtrain, {&dval});
  const TrainingEvaluator desk_ev(dtrain, dval, desk.search);
  const EvolutionState state = evolve(desk.cgp, desk_ev, 5, {2, 4});
  bool saw_zero = state.history.front().parent_fitness == 0.0;
  for (const GenerationRecord& rec : state.history)
    for (const double f : rec.offspring_fitnesses) saw_zero = saw_zero || f == 0.0;
  ok = ok && state.history.size() == 6 && saw_zero;
  d << ", faulty run completed " << state.history.size() - 1
    << " generations (zero-fitness candidates seen: " << (saw_zero ? "yes" : "no")
    << ")";

  detail = d.str();
  return ok;
}

bool check_reproducibility(std::string& detail) {
  const SurrogateEvaluator ev("target_active_count(25)");
  CgpConfig cfg;
  const EvolutionOptions opts{2, 9};

  const EvolutionState a = evolve(cfg, ev, 40, opts);
  const EvolutionState b = evolve(cfg, ev, 40, opts);
  std::ostringstream csv_a, csv_b, ckpt_a, ckpt_b;
  write_history_csv(a, csv_a);
  write_history_csv(b, csv_b);
  save_checkpoint(a, ckpt_a);
  save_checkpoint(b, ckpt_b);
  bool ok = a == b && csv_a.str() == csv_b.str() && ckpt_a.str() == ckpt_b.str();

  EvolutionState resumed = evolve(cfg, ev, 15, opts);
  std::stringstream mid;
  save_checkpoint(resumed, mid);
  EvolutionState reloaded = load_checkpoint(mid);
  evolve_from(reloaded, ev, 40);
  std::ostringstream csv_r;
  write_history_csv(reloaded, csv_r);
  ok = ok && reloaded == a && csv_r.str() == csv_a.str();

  detail = ok ? "reruns byte-identical; resumed trajectory equals uninterrupted"
              : "divergence between reruns or across a resume";
  return ok;
}

// Not gating: runs the small-data analogue only when CIFAR-10 batches are
// actually present.
bool check_cifar_smoke(std::string& detail) {
  const char* env = std::getenv("CGPNAS_DATA_DIR");
  const std::string dir = env && *env ? env : "data";
  Cifar10 cifar;
  try {
    cifar = load_cifar10(dir);
  } catch (const MissingFile&) {
    detail = "skipped: CIFAR-10 batches not present under '" + dir + "'";
    return true;
  }

  RunConfig cfg = scenario_preset("small");
  cfg.cgp.channels = {16, 32};
  cfg.search.epochs = 8;
  auto [train, val] = split(cifar.train, {cfg.split_train, cfg.split_val, cfg.split_seed});
  mean_subtract(train, {&val});
  const TrainingEvaluator ev(train, val, cfg.search, TrainingLimits{cfg.memory_budget});
  const EvolutionState state = evolve(cfg.cgp, ev, 30, {2, 1});
  const double init = state.history.front().parent_fitness;
  const double final_fitness = state.history.back().parent_fitness;
  std::ostringstream d;
  d << "validation accuracy " << init << " -> " << final_fitness;
  detail = d.str();
  return final_fitness > init;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<bool(std::string&)>>> criteria{
      {"genome-laws", check_genome_laws},
      {"shape-algebra", check_shape_algebra},
      {"gradient-correctness", check_gradient_correctness},
      {"elitism", check_elitism},
      {"search-effectiveness", check_search_effectiveness},
      {"desk-pipeline", check_desk_pipeline},
      {"training-protocol", check_training_protocol},
      {"zero-fitness", check_zero_fitness},
      {"reproducibility", check_reproducibility},
      {"cifar-smoke", check_cifar_smoke},
  };

  std::vector<std::string> requested;
  for (int i = 1; i < argc; ++i) requested.emplace_back(argv[i]);
  if (requested.empty() || (requested.size() == 1 && requested[0] == "all"))
    for (const auto& [name, fn] : criteria) requested.push_back(name);

  int failures = 0;
  for (const std::string& name : requested) {
    if (name == "all") continue;
    const auto it = std::find_if(criteria.begin(), criteria.end(),
                                 [&name](const auto& c) { return c.first == name; });
    if (it == criteria.end()) {
      std::cout << "[FAIL] " << name << ": unknown criterion\n";
      ++failures;
      continue;
    }
    std::string det;
    bool ok = false;
    try {
      ok = it->second(det);
    } catch (const std::exception& e) {
      det = std::string("exception: ") + e.what();
    }
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << ": " << det << '\n';
    failures += ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}

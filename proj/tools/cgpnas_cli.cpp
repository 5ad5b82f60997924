// cgpnas: architecture search at the command line.
//
// Exit codes (stable): 0 success, 2 configuration or usage error, 3 dataset
// error, 4 bad input artifact (genotype or checkpoint, including shape
// failures during retraining), 130 interrupted (checkpoint written).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "cgpnas/data.hpp"
#include "cgpnas/errors.hpp"
#include "cgpnas/evaluator.hpp"
#include "cgpnas/evolution.hpp"
#include "cgpnas/gradcheck.hpp"
#include "cgpnas/graph.hpp"
#include "cgpnas/network.hpp"
#include "cgpnas/run_config.hpp"
#include "cgpnas/version.hpp"

namespace fs = std::filesystem;
using namespace cgpnas;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitArtifact = 4;
constexpr int kExitInterrupted = 130;

volatile std::sig_atomic_t g_interrupted = 0;

void on_interrupt(int) { g_interrupted = 1; }

struct CommonFlags {
  std::string config_path;
  std::string scenario;
  std::string out_dir;
  std::string surrogate;
  std::optional<std::uint64_t> seed;
  std::optional<int> generations;
  std::optional<int> lambda;
};

void add_common_flags(CLI::App& cmd, CommonFlags& f, bool search_knobs) {
  cmd.add_option("--config", f.config_path, "key=value config file");
  cmd.add_option("--scenario", f.scenario, "preset: default, small or desk")
      ->default_val("default");
  cmd.add_option("--seed", f.seed, "master seed override");
  cmd.add_option("--out", f.out_dir, "output directory override");
  if (search_knobs) {
    cmd.add_option("--surrogate", f.surrogate,
                   "score by a graph surrogate instead of training");
    cmd.add_option("--generations", f.generations, "generation budget override");
    cmd.add_option("--lambda", f.lambda, "offspring per generation override");
  }
}

// Preset, then file, then flags; strongest last.
RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = scenario_preset(f.scenario.empty() ? "default" : f.scenario);
  if (!f.config_path.empty()) cfg = load_run_config(f.config_path, cfg);
  if (f.seed) cfg.seed = *f.seed;
  if (f.generations) cfg.generations = *f.generations;
  if (f.lambda) cfg.lambda = *f.lambda;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.surrogate.empty()) cfg.surrogate = f.surrogate;
  if (cfg.dataset != "cifar10" && cfg.dataset != "synthetic")
    throw ConfigParseError("config key 'dataset': expected cifar10 or synthetic, got '" +
                           cfg.dataset + "'");
  cfg.cgp.validate();
  return cfg;
}

struct DataBundle {
  Dataset train;
  Dataset val;   // held-out monitor split
  Dataset test;  // empty images when the source has no separate test set
  bool has_test = false;
};

DataBundle load_data(const RunConfig& cfg, bool full_train) {
  DataBundle out;
  const SplitSpec spec{cfg.split_train, cfg.split_val, cfg.split_seed};
  if (cfg.dataset == "synthetic") {
    const Dataset all = synthetic_dataset(cfg.synthetic, cfg.synthetic_seed);
    std::tie(out.train, out.val) = split(all, spec);
    mean_subtract(out.train, {&out.val});
    return out;
  }
  Cifar10 c = load_cifar10(resolve_data_dir(cfg));
  if (full_train) {
    out.train = std::move(c.train);
    out.val = c.test;  // monitors retraining; no images are held out of training
    out.test = std::move(c.test);
    out.has_test = true;
    mean_subtract(out.train, {&out.val, &out.test});
    return out;
  }
  std::tie(out.train, out.val) = split(c.train, spec);
  out.test = std::move(c.test);
  out.has_test = true;
  mean_subtract(out.train, {&out.val, &out.test});
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::string& evaluator_id, const RunConfig& cfg) {
  std::ofstream out(dir / "manifest.txt");
  out << "cgpnas/" << kVersion << '\n'
      << "command=" << command << '\n'
      << "evaluator=" << evaluator_id << '\n'
      << run_config_to_text(cfg);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

TensorShape input_shape_for(const RunConfig& cfg) {
  if (cfg.dataset == "synthetic")
    return {cfg.synthetic.image_size, cfg.synthetic.image_size, 1};
  return {32, 32, 3};
}

// Shapes are advisory in exports; a genotype whose phenotype cannot shape
// still renders, just without dimension labels.
std::string best_dot(const Genotype& g, const TensorShape& input, int classes) {
  LayerGraph graph = decode(g, g.config.make_catalog(), classes);
  try {
    graph = infer_shapes(graph, input);
  } catch (const InvalidArchitecture&) {
  }
  return to_dot(graph);
}

int classes_for(const RunConfig& cfg) {
  return cfg.dataset == "synthetic" ? cfg.synthetic.classes : 10;
}

Clock steady_clock_since_start() {
  const auto t0 = std::chrono::steady_clock::now();
  return [t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
}

int cmd_search(const CommonFlags& flags, const std::string& resume_path) {
  RunConfig cfg;
  try {
    cfg = resolve_config(flags);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::unique_ptr<Evaluator> evaluator;
  Clock clock;  // stays null in surrogate mode so logs are byte-stable
  DataBundle data;
  if (!cfg.surrogate.empty()) {
    try {
      evaluator =
          std::make_unique<SurrogateEvaluator>(cfg.surrogate);
    } catch (const UnknownSurrogate& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
  } else {
    try {
      data = load_data(cfg, /*full_train=*/false);
    } catch (const std::exception& e) {
      std::cerr << "dataset error: " << e.what() << '\n';
      return kExitData;
    }
    evaluator = std::make_unique<TrainingEvaluator>(
        data.train, data.val, cfg.search, TrainingLimits{cfg.memory_budget});
    clock = steady_clock_since_start();
  }

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  write_manifest(out_dir, "search", evaluator->id(), cfg);
  const fs::path ckpt_path = out_dir / "checkpoint.ckpt";
  const fs::path csv_path = out_dir / "history.csv";

  auto persist = [&](const EvolutionState& s) {
    save_checkpoint_file(s, ckpt_path.string());
    std::ofstream csv(csv_path);
    write_history_csv(s, csv);
  };

  EvolutionState state;
  try {
    if (resume_path.empty()) {
      state = init_evolution(cfg.cgp, *evaluator, {cfg.lambda, cfg.seed}, clock);
      persist(state);
    } else {
      state = load_checkpoint_file(resume_path);
    }
  } catch (const InvalidLambda& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitArtifact;
  }

  std::signal(SIGINT, on_interrupt);
  while (state.generation < cfg.generations && !g_interrupted) {
    step(state, *evaluator, clock);
    persist(state);
  }
  std::signal(SIGINT, SIG_DFL);

  const int classes = cfg.surrogate.empty() ? data.train.class_count : classes_for(cfg);
  save_genotype(state.parent.genotype, (out_dir / "best_genotype.txt").string());
  write_text(out_dir / "best.dot",
             best_dot(state.parent.genotype, input_shape_for(cfg), classes));

  nlohmann::json result;
  result["generations"] = state.generation;
  result["parent_fitness"] = state.parent.fitness.value_or(0.0);
  result["active_count"] = active_nodes(state.parent.genotype).size();
  result["param_count"] = state.parent.meta.param_count;
  result["evaluator"] = evaluator->id();
  result["seed"] = cfg.seed;
  result["interrupted"] = g_interrupted != 0;
  write_text(out_dir / "result.json", result.dump(2) + "\n");
  std::cout << result.dump(2) << '\n';

  if (g_interrupted) {
    std::cerr << "interrupted at generation " << state.generation
              << "; checkpoint written\n";
    return kExitInterrupted;
  }
  return kExitOk;
}

int cmd_retrain(const CommonFlags& flags, const std::string& genotype_path) {
  RunConfig cfg;
  try {
    cfg = resolve_config(flags);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  Genotype g;
  try {
    g = load_genotype_file(genotype_path);
  } catch (const std::exception& e) {
    std::cerr << "genotype error: " << e.what() << '\n';
    return kExitArtifact;
  }

  DataBundle data;
  try {
    data = load_data(cfg, /*full_train=*/true);
  } catch (const std::exception& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kExitData;
  }
  // Synthetic sources have no separate test set; the held-out split doubles
  // as one.
  const Dataset& test = data.has_test ? data.test : data.val;

  const TrainingEvaluator evaluator(data.train, data.val, cfg.retrain,
                                    TrainingLimits{cfg.memory_budget}, &test);
  const FitnessResult r = evaluator.evaluate(g, RngStream::derive(cfg.seed, 0, 0));

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  write_manifest(out_dir, "retrain", evaluator.id(), cfg);
  write_text(out_dir / "retrain.json", fitness_json(r) + "\n");
  std::cout << fitness_json(r) << '\n';

  if (r.reason != FailureReason::None) {
    std::cerr << "retrain failed: " << failure_name(r.reason) << '\n';
    return kExitArtifact;
  }
  return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& genotype_path) {
  RunConfig cfg;
  try {
    cfg = resolve_config(flags);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  Genotype g;
  try {
    g = load_genotype_file(genotype_path);
  } catch (const std::exception& e) {
    std::cerr << "genotype error: " << e.what() << '\n';
    return kExitArtifact;
  }

  std::unique_ptr<Evaluator> evaluator;
  DataBundle data;
  if (!cfg.surrogate.empty()) {
    try {
      evaluator = std::make_unique<SurrogateEvaluator>(cfg.surrogate);
    } catch (const UnknownSurrogate& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
  } else {
    try {
      data = load_data(cfg, /*full_train=*/false);
    } catch (const std::exception& e) {
      std::cerr << "dataset error: " << e.what() << '\n';
      return kExitData;
    }
    evaluator = std::make_unique<TrainingEvaluator>(
        data.train, data.val, cfg.search, TrainingLimits{cfg.memory_budget});
  }

  // Same stream the search would hand the initial parent, so `eval` on a
  // checkpointed parent reproduces its recorded fitness.
  const FitnessResult r = evaluator->evaluate(g, RngStream::derive(cfg.seed, 0, 0));
  std::cout << fitness_json(r) << '\n';
  return kExitOk;
}

int cmd_export(const std::string& genotype_path, const std::string& format,
               const std::string& out_path) {
  if (format != "dot" && format != "json") {
    std::cerr << "config error: unknown export format '" << format
              << "' (expected dot or json)\n";
    return kExitConfig;
  }

  Genotype g;
  try {
    g = load_genotype_file(genotype_path);
  } catch (const std::exception& e) {
    std::cerr << "genotype error: " << e.what() << '\n';
    return kExitArtifact;
  }

  const LayerGraph graph = decode(g, g.config.make_catalog(), 10);
  const std::string text = format == "dot" ? to_dot(graph) : to_json(graph);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
  return kExitOk;
}

GraphNode fn_node(FunctionKind kind, int arity, int co, int k, int in0, int in1 = -1) {
  GraphNode n;
  n.kind = GraphNodeKind::Function;
  n.fn = {kind, arity, co, k};
  n.inputs = {in0, in1};
  return n;
}

// Fixed architecture touching every layer kind, both residual shortcut
// directions, Sum channel padding and Concat spatial alignment.
LayerGraph gradcheck_graph() {
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
  return infer_shapes(g, {12, 12, 2});
}

int cmd_gradcheck(std::uint64_t seed, int samples, double eps, double tolerance) {
  const LayerGraph graph = gradcheck_graph();
  RngStream init = RngStream::derive(seed, ~0ull, 2);
  Network<double> net(graph, init);

  RngStream data_rng = RngStream::derive(seed, ~0ull, 3);
  Tensor4<double> input(3, graph.nodes[0].shape);
  for (std::size_t i = 0; i < input.size(); ++i)
    input.data()[i] = data_rng.normal();
  const std::vector<int> labels{0, 2, 1};

  RngStream pick = RngStream::derive(seed, ~0ull, 4);
  const GradCheckReport report = grad_check(net, input, labels, samples, eps, pick);

  nlohmann::json out;
  out["max_rel_error"] = report.max_rel_error;
  out["mean_rel_error"] = report.mean_rel_error;
  out["checked"] = report.checked;
  out["worst_param"] = report.worst_param;
  out["tolerance"] = tolerance;
  out["pass"] = report.max_rel_error < tolerance;
  std::cout << out.dump(2) << '\n';
  return report.max_rel_error < tolerance ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evolutionary CNN architecture search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("cgpnas ") + kVersion);

  CommonFlags search_flags;
  std::string resume_path;
  CLI::App* search = app.add_subcommand("search", "evolve architectures");
  add_common_flags(*search, search_flags, /*search_knobs=*/true);
  search->add_option("--resume", resume_path, "continue from a checkpoint file");

  CommonFlags retrain_flags;
  std::string retrain_genotype;
  CLI::App* retrain =
      app.add_subcommand("retrain", "train a found architecture to convergence");
  add_common_flags(*retrain, retrain_flags, /*search_knobs=*/false);
  retrain->add_option("genotype", retrain_genotype, "genotype file")->required();

  CommonFlags eval_flags;
  std::string eval_genotype;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a single genotype");
  add_common_flags(*eval_cmd, eval_flags, /*search_knobs=*/true);
  eval_cmd->add_option("genotype", eval_genotype, "genotype file")->required();

  std::string export_genotype, export_format = "dot", export_out;
  CLI::App* exp = app.add_subcommand("export", "render a genotype's architecture");
  exp->add_option("genotype", export_genotype, "genotype file")->required();
  exp->add_option("--format", export_format, "dot or json");
  exp->add_option("--out", export_out, "write here instead of stdout");

  std::uint64_t gc_seed = 0;
  int gc_samples = 240;
  double gc_eps = 1e-5, gc_tolerance = 1e-3;
  CLI::App* gc =
      app.add_subcommand("gradcheck", "finite-difference audit of the nn runtime");
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->add_option("--samples", gc_samples, "parameters to probe");
  gc->add_option("--eps", gc_eps, "finite-difference step");
  gc->add_option("--tolerance", gc_tolerance, "max relative error to pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (search->parsed()) return cmd_search(search_flags, resume_path);
    if (retrain->parsed()) return cmd_retrain(retrain_flags, retrain_genotype);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_genotype);
    if (exp->parsed()) return cmd_export(export_genotype, export_format, export_out);
    if (gc->parsed())
      return cmd_gradcheck(gc_seed, gc_samples, gc_eps, gc_tolerance);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}

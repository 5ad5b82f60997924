#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cgpnas/evaluator.hpp"
#include "cgpnas/genotype.hpp"
#include "cgpnas/rng.hpp"

namespace cgpnas {

struct EvalMetadata {
  int epochs_trained = 0;
  double wall_seconds = 0.0;
  std::int64_t param_count = 0;

  bool operator==(const EvalMetadata&) const = default;
};

struct Individual {
  Genotype genotype;
  std::optional<double> fitness;  // empty until evaluated; never recomputed
  EvalMetadata meta;

  bool operator==(const Individual&) const = default;
};

struct GenerationRecord {
  int generation = 0;  // 0 is the initialization row
  double parent_fitness = 0.0;
  std::vector<double> offspring_fitnesses;  // empty at initialization
  int parent_active_count = 0;
  std::int64_t parent_param_count = 0;
  double elapsed_seconds = 0.0;

  bool operator==(const GenerationRecord&) const = default;
};

// Wall-clock source for the elapsed_seconds column; a null clock reads 0,
// which keeps logs byte-identical across reruns and resumes.
using Clock = std::function<double()>;

struct EvolutionOptions {
  int lambda = 2;
  std::uint64_t seed = 0;
};

// Optional extra stops on top of the generation budget.
struct StopRules {
  double target_fitness = -1.0;    // stop once parent fitness reaches this; off when < 0
  double max_wall_seconds = -1.0;  // stop once the clock passes this; off when < 0
};

// Evaluation streams are re-derived as derive(seed, generation, offspring
// index), so only the mutation stream carries state between generations.
struct EvolutionState {
  Individual parent;
  int generation = 0;
  int lambda = 2;
  std::uint64_t seed = 0;
  RngStream mutation_rng{0};
  std::vector<GenerationRecord> history;

  bool operator==(const EvolutionState&) const = default;
};

using CheckpointSink = std::function<void(const EvolutionState&)>;

// Draws and evaluates the initial parent. Throws InvalidLambda or
// ConfigInfeasible on a bad setup; an evaluator exception becomes fitness 0.
EvolutionState init_evolution(const CgpConfig& cfg, const Evaluator& evaluator,
                              const EvolutionOptions& options, const Clock& clock = {});

// One generation: forced-mutate lambda offspring, evaluate them concurrently,
// neutral-mutate the parent when no offspring improved on it, then keep the
// elite. The evaluator runs exactly lambda times.
void step(EvolutionState& state, const Evaluator& evaluator, const Clock& clock = {});

// Highest fitness wins; an offspring beats an equal-fitness parent, earlier
// offspring beat later ones. All fitnesses must be set.
const Individual& select_elite(const Individual& parent,
                               const std::vector<Individual>& offspring);

// Runs init plus steps until the generation budget or a stop rule fires,
// invoking sink after initialization and after every generation.
EvolutionState evolve(const CgpConfig& cfg, const Evaluator& evaluator, int max_generations,
                      const EvolutionOptions& options, const Clock& clock = {},
                      const CheckpointSink& sink = {}, const StopRules& stop = {});

// Continues a (possibly reloaded) state up to max_generations total.
void evolve_from(EvolutionState& state, const Evaluator& evaluator, int max_generations,
                 const Clock& clock = {}, const CheckpointSink& sink = {},
                 const StopRules& stop = {});

// Versioned text checkpoint; load(save(s)) == s including the RNG state.
void save_checkpoint(const EvolutionState& state, std::ostream& out);
EvolutionState load_checkpoint(std::istream& in);  // CorruptCheckpoint / VersionMismatch
void save_checkpoint_file(const EvolutionState& state, const std::string& path);
EvolutionState load_checkpoint_file(const std::string& path);  // also MissingFile

// One row per history record:
// generation,parent_fitness,offspring_fitnesses,parent_active_count,
// parent_param_count,elapsed_seconds with the offspring list ;-joined.
void write_history_csv(const EvolutionState& state, std::ostream& out);

}  // namespace cgpnas

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "cgpnas/errors.hpp"
#include "cgpnas/evaluator.hpp"
#include "cgpnas/evolution.hpp"
#include "cgpnas/genotype.hpp"
#include "test_helpers.hpp"

using namespace cgpnas;

namespace {

CgpConfig small_config() {
  CgpConfig cfg;
  cfg.n_rows = 2;
  cfg.n_cols = 6;
  cfg.levels_back = 6;
  cfg.min_active = 1;
  cfg.max_active = 8;
  cfg.mutation_rate = 0.2;
  cfg.channels = {8};
  return cfg;
}

Individual individual(double fitness) {
  Individual ind;
  ind.fitness = fitness;
  return ind;
}

struct CountingEvaluator : Evaluator {
  const Evaluator& inner;
  mutable std::atomic<int> calls{0};
  explicit CountingEvaluator(const Evaluator& e) : inner(e) {}
  FitnessResult evaluate(const Genotype& g, RngStream rng) const override {
    ++calls;
    return inner.evaluate(g, rng);
  }
  std::string id() const override { return inner.id(); }
};

struct ThrowingEvaluator : Evaluator {
  FitnessResult evaluate(const Genotype&, RngStream) const override {
    throw std::runtime_error("deliberately broken");
  }
  std::string id() const override { return "throwing"; }
};

// Fitness keyed on the evaluation stream state, which init/step derive as
// (seed, generation, offspring index); lets a test script exact outcomes
// while staying deterministic under concurrent calls.
struct ScriptedEvaluator : Evaluator {
  std::vector<std::pair<RngStream, double>> table;
  void set(std::uint64_t seed, std::uint64_t gen, std::uint64_t idx, double fitness) {
    table.emplace_back(RngStream::derive(seed, gen, idx), fitness);
  }
  FitnessResult evaluate(const Genotype&, RngStream rng) const override {
    for (const auto& [key, fitness] : table)
      if (rng == key) {
        FitnessResult fr;
        fr.fitness = fitness;
        return fr;
      }
    throw std::logic_error("unexpected evaluation stream");
  }
  std::string id() const override { return "scripted"; }
};

}  // namespace

TEST_CASE("select_elite prefers offspring on ties and lowest index otherwise") {
  const Individual parent = individual(0.7);

  std::vector<Individual> kids = {individual(0.6), individual(0.9)};
  CHECK(&select_elite(parent, kids) == &kids[1]);

  kids = {individual(0.7), individual(0.5)};
  CHECK(&select_elite(parent, kids) == &kids[0]);  // tie goes to the offspring

  kids = {individual(0.1), individual(0.1)};
  CHECK(&select_elite(parent, kids) == &parent);

  kids = {individual(0.8), individual(0.8)};
  CHECK(&select_elite(parent, kids) == &kids[0]);  // offspring tie: lowest index

  kids = {Individual{}};
  CHECK_THROWS_AS(select_elite(parent, kids), std::logic_error);
  CHECK_THROWS_AS(select_elite(Individual{}, std::vector<Individual>{individual(0.5)}),
                  std::logic_error);
}

TEST_CASE("evolution keeps the elite and records every generation") {
  const SurrogateEvaluator surrogate("active_count_ratio");
  const EvolutionState s = evolve(small_config(), surrogate, 30, {2, 3});

  CHECK(s.generation == 30);
  REQUIRE(s.history.size() == 31);
  CHECK(s.history.front().generation == 0);
  CHECK(s.history.front().offspring_fitnesses.empty());
  CHECK(s.parent.fitness.value() >= s.history.front().parent_fitness);
  for (std::size_t i = 0; i < s.history.size(); ++i) {
    const GenerationRecord& r = s.history[i];
    CHECK(r.generation == static_cast<int>(i));
    if (i > 0) {
      CHECK(r.offspring_fitnesses.size() == 2);
      CHECK(r.parent_fitness >= s.history[i - 1].parent_fitness);  // elitism
    }
    CHECK(r.parent_fitness >= 0.0);
    CHECK(r.parent_fitness <= 1.0);
    CHECK(r.parent_active_count == (i + 1 < s.history.size()
                                        ? r.parent_active_count
                                        : static_cast<int>(active_nodes(s.parent.genotype).size())));
  }
}

TEST_CASE("same seed and config give byte-identical histories") {
  const SurrogateEvaluator surrogate("depth_reward");
  const EvolutionState a = evolve(small_config(), surrogate, 15, {2, 11});
  const EvolutionState b = evolve(small_config(), surrogate, 15, {2, 11});
  CHECK(a == b);

  std::ostringstream csv_a, csv_b;
  write_history_csv(a, csv_a);
  write_history_csv(b, csv_b);
  CHECK(csv_a.str() == csv_b.str());

  const EvolutionState c = evolve(small_config(), surrogate, 15, {2, 12});
  CHECK_FALSE(a == c);
}

TEST_CASE("the evaluator runs exactly lambda times per generation plus once") {
  const SurrogateEvaluator surrogate("active_count_ratio");
  const CountingEvaluator counted(surrogate);
  evolve(small_config(), counted, 20, {3, 7});
  CHECK(counted.calls.load() == 1 + 20 * 3);
}

TEST_CASE("evaluator exceptions become zero fitness and the run continues") {
  const ThrowingEvaluator broken;
  const EvolutionState s = evolve(small_config(), broken, 5, {2, 1});
  REQUIRE(s.history.size() == 6);
  for (const GenerationRecord& r : s.history) {
    CHECK(r.parent_fitness == 0.0);
    for (double f : r.offspring_fitnesses) CHECK(f == 0.0);
  }
  CHECK(s.parent.fitness.value() == 0.0);
}

TEST_CASE("neutral mutation fires only without improvement and keeps the phenotype") {
  const std::uint64_t seed = 42;
  ScriptedEvaluator scripted;
  scripted.set(seed, 0, 0, 0.5);  // initial parent
  scripted.set(seed, 1, 0, 0.3);  // generation 1: both worse
  scripted.set(seed, 1, 1, 0.4);
  scripted.set(seed, 2, 0, 0.6);  // generation 2: first offspring improves
  scripted.set(seed, 2, 1, 0.2);
  scripted.set(seed, 3, 0, 0.6);  // generation 3: exact ties
  scripted.set(seed, 3, 1, 0.6);

  EvolutionState s = init_evolution(small_config(), scripted, {2, seed});
  CHECK(s.parent.fitness.value() == 0.5);

  const std::vector<int> sig0 = phenotype_signature(s.parent.genotype);
  step(s, scripted);  // no improvement: neutral drift on the parent
  CHECK(s.parent.fitness.value() == 0.5);
  CHECK(phenotype_signature(s.parent.genotype) == sig0);
  CHECK(s.history.back().offspring_fitnesses == std::vector<double>{0.3, 0.4});

  step(s, scripted);  // strict improvement: offspring 0 becomes the parent
  CHECK(s.parent.fitness.value() == 0.6);
  const std::vector<int> sig2 = phenotype_signature(s.parent.genotype);
  CHECK(sig2 != sig0);  // forced mutation changed the decoded graph

  step(s, scripted);  // equal fitness: the offspring still takes over
  CHECK(s.parent.fitness.value() == 0.6);
  CHECK(phenotype_signature(s.parent.genotype) != sig2);
}

TEST_CASE("checkpoints round-trip and resumed runs match uninterrupted ones") {
  const SurrogateEvaluator surrogate("active_count_ratio");
  const CgpConfig cfg = small_config();

  SUBCASE("load of save is identity") {
    const EvolutionState s = evolve(cfg, surrogate, 10, {2, 5});
    std::stringstream buffer;
    save_checkpoint(s, buffer);
    const EvolutionState back = load_checkpoint(buffer);
    CHECK(back == s);
  }

  SUBCASE("resume reproduces the uninterrupted trajectory") {
    const EvolutionState full = evolve(cfg, surrogate, 10, {2, 5});

    const EvolutionState half = evolve(cfg, surrogate, 5, {2, 5});
    std::stringstream buffer;
    save_checkpoint(half, buffer);
    EvolutionState resumed = load_checkpoint(buffer);
    evolve_from(resumed, surrogate, 10);

    CHECK(resumed == full);
    std::ostringstream csv_full, csv_resumed;
    write_history_csv(full, csv_full);
    write_history_csv(resumed, csv_resumed);
    CHECK(csv_full.str() == csv_resumed.str());
  }

  SUBCASE("failure modes") {
    const EvolutionState s = evolve(cfg, surrogate, 3, {2, 5});
    std::ostringstream buffer;
    save_checkpoint(s, buffer);
    const std::string text = buffer.str();

    std::istringstream truncated(text.substr(0, text.size() - 10));
    CHECK_THROWS_AS(load_checkpoint(truncated), CorruptCheckpoint);

    std::string bumped = text;
    bumped[bumped.find('1')] = '9';  // first digit is the format version
    std::istringstream wrong_version(bumped);
    CHECK_THROWS_AS(load_checkpoint(wrong_version), VersionMismatch);

    std::istringstream garbage("pickled state v3\nstuff\n");
    CHECK_THROWS_AS(load_checkpoint(garbage), CorruptCheckpoint);
  }

  SUBCASE("file helpers") {
    const auto dir = std::filesystem::temp_directory_path() / "cgpnas_evo_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "state.ckpt").string();
    const EvolutionState s = evolve(cfg, surrogate, 4, {2, 9});
    save_checkpoint_file(s, path);
    CHECK(load_checkpoint_file(path) == s);
    CHECK_THROWS_AS(load_checkpoint_file((dir / "absent.ckpt").string()), MissingFile);
  }
}

TEST_CASE("history csv carries one row per record") {
  const SurrogateEvaluator surrogate("active_count_ratio");
  const EvolutionState s = evolve(small_config(), surrogate, 8, {2, 13});
  std::ostringstream out;
  write_history_csv(s, out);
  std::istringstream lines(out.str());
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line ==
        "generation,parent_fitness,offspring_fitnesses,parent_active_count,"
        "parent_param_count,elapsed_seconds");
  int rows = 0;
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream split(line);
    while (std::getline(split, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 6);
    CHECK(std::stoi(cells[0]) == rows);
    if (rows == 0)
      CHECK(cells[2].empty());
    else
      CHECK(std::count(cells[2].begin(), cells[2].end(), ';') == 1);  // lambda = 2
    CHECK(std::stod(cells[1]) == s.history[static_cast<std::size_t>(rows)].parent_fitness);
    CHECK(cells[5] == "0");  // null clock
    ++rows;
  }
  CHECK(rows == 9);
}

TEST_CASE("stop rules and degenerate setups") {
  const SurrogateEvaluator surrogate("active_count_ratio");

  SUBCASE("target fitness already met stops before any step") {
    StopRules stop;
    stop.target_fitness = 0.0;
    const EvolutionState s = evolve(small_config(), surrogate, 50, {2, 3}, {}, {}, stop);
    CHECK(s.generation == 0);
    CHECK(s.history.size() == 1);
  }

  SUBCASE("wall clock budget") {
    StopRules stop;
    stop.max_wall_seconds = 0.0;
    const Clock instant = [] { return 1.0; };
    const EvolutionState s = evolve(small_config(), surrogate, 50, {2, 3}, instant, {}, stop);
    CHECK(s.generation == 0);
  }

  SUBCASE("rejected parameters") {
    CHECK_THROWS_AS(evolve(small_config(), surrogate, 5, {0, 3}), InvalidLambda);
    CHECK_THROWS_AS(evolve(small_config(), surrogate, 0, {2, 3}), ConfigInfeasible);
    EvolutionState blank;
    CHECK_THROWS_AS(step(blank, surrogate), std::logic_error);
  }
}

TEST_CASE("the search closes in on a surrogate optimum") {
  // smoke-scale preview of the acceptance calibration: the full 10-seed run
  // lives in the acceptance suite
  const SurrogateEvaluator surrogate("target_active_count(25)");
  CgpConfig cfg;  // published grid: 5 x 30, active window [10, 50]
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const EvolutionState s = evolve(cfg, surrogate, 200, {2, seed});
    const double first = s.history.front().parent_fitness;
    const double last = s.parent.fitness.value();
    CHECK(last >= first);
    if (last > first) ++improved;
  }
  CHECK(improved >= 2);
}

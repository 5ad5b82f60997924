#include "cgpnas/evolution.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cgpnas/errors.hpp"
#include "cgpnas/version.hpp"

namespace cgpnas {

namespace {

constexpr std::uint64_t kMutationStream = ~std::uint64_t{0};

Individual evaluate_guarded(const Evaluator& ev, const Genotype& g, RngStream rng) {
  Individual ind;
  ind.genotype = g;
  FitnessResult fr;
  try {
    fr = ev.evaluate(g, rng);
  } catch (...) {
    fr = FitnessResult{};
    fr.reason = FailureReason::EvaluatorError;
  }
  ind.fitness = fr.fitness;
  ind.meta = {fr.epochs_trained, fr.wall_seconds, fr.param_count};
  return ind;
}

void record_generation(EvolutionState& s, std::vector<double> offspring_fitnesses,
                       const Clock& clock) {
  GenerationRecord rec;
  rec.generation = s.generation;
  rec.parent_fitness = s.parent.fitness.value();
  rec.offspring_fitnesses = std::move(offspring_fitnesses);
  rec.parent_active_count = static_cast<int>(active_nodes(s.parent.genotype).size());
  rec.parent_param_count = s.parent.meta.param_count;
  rec.elapsed_seconds = clock ? clock() : 0.0;
  s.history.push_back(std::move(rec));
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

EvolutionState init_evolution(const CgpConfig& cfg, const Evaluator& evaluator,
                              const EvolutionOptions& options, const Clock& clock) {
  if (options.lambda < 1)
    throw InvalidLambda("lambda must be at least 1, got " + std::to_string(options.lambda));
  cfg.validate();
  EvolutionState s;
  s.lambda = options.lambda;
  s.seed = options.seed;
  s.mutation_rng = RngStream::derive(options.seed, kMutationStream, 0);
  RngStream init_rng = RngStream::derive(options.seed, kMutationStream, 1);
  const Genotype g = random_genotype(cfg, init_rng);
  s.parent = evaluate_guarded(evaluator, g, RngStream::derive(options.seed, 0, 0));
  s.generation = 0;
  record_generation(s, {}, clock);
  return s;
}

void step(EvolutionState& s, const Evaluator& evaluator, const Clock& clock) {
  if (s.lambda < 1) throw InvalidLambda("state carries lambda " + std::to_string(s.lambda));
  if (!s.parent.fitness) throw std::logic_error("step needs an evaluated parent");
  const int gen = s.generation + 1;

  std::vector<Genotype> kids;
  kids.reserve(static_cast<std::size_t>(s.lambda));
  for (int i = 0; i < s.lambda; ++i)
    kids.push_back(forced_mutation(s.parent.genotype, s.mutation_rng));

  std::vector<std::future<Individual>> futures;
  futures.reserve(kids.size());
  for (int i = 0; i < s.lambda; ++i) {
    RngStream eval_rng =
        RngStream::derive(s.seed, static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(i));
    futures.push_back(std::async(
        std::launch::async,
        [&evaluator, g = kids[static_cast<std::size_t>(i)], eval_rng]() {
          return evaluate_guarded(evaluator, g, eval_rng);
        }));
  }
  std::vector<Individual> offspring;
  offspring.reserve(futures.size());
  std::vector<double> fitnesses;
  for (std::size_t i = 0; i < futures.size(); ++i) {
    try {
      offspring.push_back(futures[i].get());
    } catch (...) {
      Individual failed;
      failed.genotype = kids[i];
      failed.fitness = 0.0;
      offspring.push_back(std::move(failed));
    }
    fitnesses.push_back(offspring.back().fitness.value());
  }

  double best = 0.0;
  for (const Individual& kid : offspring) best = std::max(best, kid.fitness.value());
  if (best <= s.parent.fitness.value())
    s.parent.genotype = neutral_mutation(s.parent.genotype, s.mutation_rng);

  s.parent = select_elite(s.parent, offspring);
  s.generation = gen;
  record_generation(s, std::move(fitnesses), clock);
}

const Individual& select_elite(const Individual& parent,
                               const std::vector<Individual>& offspring) {
  if (!parent.fitness) throw std::logic_error("select_elite: parent unevaluated");
  const Individual* winner = &parent;
  bool winner_is_parent = true;
  for (const Individual& kid : offspring) {
    if (!kid.fitness) throw std::logic_error("select_elite: offspring unevaluated");
    const double f = kid.fitness.value();
    if (f > winner->fitness.value() || (winner_is_parent && f == winner->fitness.value())) {
      winner = &kid;
      winner_is_parent = false;
    }
  }
  return *winner;
}

EvolutionState evolve(const CgpConfig& cfg, const Evaluator& evaluator, int max_generations,
                      const EvolutionOptions& options, const Clock& clock,
                      const CheckpointSink& sink, const StopRules& stop) {
  if (max_generations < 1)
    throw ConfigInfeasible("max_generations must be at least 1, got " +
                           std::to_string(max_generations));
  EvolutionState s = init_evolution(cfg, evaluator, options, clock);
  if (sink) sink(s);
  evolve_from(s, evaluator, max_generations, clock, sink, stop);
  return s;
}

void evolve_from(EvolutionState& s, const Evaluator& evaluator, int max_generations,
                 const Clock& clock, const CheckpointSink& sink, const StopRules& stop) {
  while (s.generation < max_generations) {
    if (stop.target_fitness >= 0.0 && s.parent.fitness &&
        s.parent.fitness.value() >= stop.target_fitness)
      break;
    if (stop.max_wall_seconds >= 0.0 && clock && clock() >= stop.max_wall_seconds) break;
    step(s, evaluator, clock);
    if (sink) sink(s);
  }
}

void save_checkpoint(const EvolutionState& s, std::ostream& out) {
  out << kCheckpointFormat << "\n";
  out << "seed " << s.seed << "\n";
  out << "lambda " << s.lambda << "\n";
  out << "generation " << s.generation << "\n";
  out << "rng " << s.mutation_rng.serialize() << "\n";
  if (s.parent.fitness)
    out << "fitness " << fmt(s.parent.fitness.value()) << "\n";
  else
    out << "fitness none\n";
  out << "meta " << s.parent.meta.epochs_trained << " " << fmt(s.parent.meta.wall_seconds)
      << " " << s.parent.meta.param_count << "\n";
  const std::string geno = serialize(s.parent.genotype);
  const long lines = std::count(geno.begin(), geno.end(), '\n');
  out << "genotype " << lines << "\n" << geno;
  out << "history " << s.history.size() << "\n";
  for (const GenerationRecord& r : s.history) {
    out << r.generation << " " << fmt(r.parent_fitness) << " " << r.parent_active_count << " "
        << r.parent_param_count << " " << fmt(r.elapsed_seconds) << " "
        << r.offspring_fitnesses.size();
    for (double f : r.offspring_fitnesses) out << " " << fmt(f);
    out << "\n";
  }
}

namespace {

std::string expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0)
    throw CorruptCheckpoint("expected '" + key + "' line");
  return line.substr(key.size() + 1);
}

}  // namespace

EvolutionState load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CorruptCheckpoint("empty checkpoint");
  if (line != kCheckpointFormat) {
    if (line.rfind("cgpnas-checkpoint/", 0) == 0)
      throw VersionMismatch("checkpoint format " + line + ", expected " + kCheckpointFormat);
    throw CorruptCheckpoint("not a checkpoint: " + line);
  }
  EvolutionState s;
  try {
    s.seed = std::stoull(expect_line(in, "seed"));
    s.lambda = std::stoi(expect_line(in, "lambda"));
    s.generation = std::stoi(expect_line(in, "generation"));
    s.mutation_rng = RngStream::deserialize(expect_line(in, "rng"));
    const std::string fitness = expect_line(in, "fitness");
    if (fitness != "none") s.parent.fitness = std::stod(fitness);
    {
      std::istringstream meta(expect_line(in, "meta"));
      if (!(meta >> s.parent.meta.epochs_trained >> s.parent.meta.wall_seconds >>
            s.parent.meta.param_count))
        throw CorruptCheckpoint("bad meta line");
    }
    const long geno_lines = std::stol(expect_line(in, "genotype"));
    std::string geno;
    for (long i = 0; i < geno_lines; ++i) {
      if (!std::getline(in, line)) throw CorruptCheckpoint("genotype block truncated");
      geno += line;
      geno += "\n";
    }
    s.parent.genotype = parse_genotype(geno);
    const std::size_t records = std::stoul(expect_line(in, "history"));
    for (std::size_t i = 0; i < records; ++i) {
      if (!std::getline(in, line)) throw CorruptCheckpoint("history truncated");
      std::istringstream row(line);
      GenerationRecord r;
      std::size_t count = 0;
      if (!(row >> r.generation >> r.parent_fitness >> r.parent_active_count >>
            r.parent_param_count >> r.elapsed_seconds >> count))
        throw CorruptCheckpoint("bad history row: " + line);
      r.offspring_fitnesses.resize(count);
      for (std::size_t k = 0; k < count; ++k)
        if (!(row >> r.offspring_fitnesses[k]))
          throw CorruptCheckpoint("short history row: " + line);
      s.history.push_back(std::move(r));
    }
  } catch (const CorruptCheckpoint&) {
    throw;
  } catch (const VersionMismatch&) {
    throw;
  } catch (const CorruptRecord& e) {
    throw CorruptCheckpoint(e.what());
  } catch (const std::exception& e) {
    throw CorruptCheckpoint(std::string("unparsable checkpoint: ") + e.what());
  }
  return s;
}

void save_checkpoint_file(const EvolutionState& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile(path);
  save_checkpoint(s, out);
  if (!out) throw CorruptCheckpoint("write failed: " + path);
}

EvolutionState load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile(path);
  return load_checkpoint(in);
}

void write_history_csv(const EvolutionState& s, std::ostream& out) {
  out << "generation,parent_fitness,offspring_fitnesses,parent_active_count,"
         "parent_param_count,elapsed_seconds\n";
  for (const GenerationRecord& r : s.history) {
    out << r.generation << "," << fmt(r.parent_fitness) << ",";
    for (std::size_t i = 0; i < r.offspring_fitnesses.size(); ++i) {
      if (i) out << ";";
      out << fmt(r.offspring_fitnesses[i]);
    }
    out << "," << r.parent_active_count << "," << r.parent_param_count << ","
        << fmt(r.elapsed_seconds) << "\n";
  }
}

}  // namespace cgpnas

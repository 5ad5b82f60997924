#include "cgpnas/genotype.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cgpnas/version.hpp"

namespace cgpnas {
namespace {

// Shared retry ceiling for the resample-until-valid loops.
constexpr int kAttemptBudget = 10000;

// Valid connection targets for a grid node: every input node plus the grid
// nodes of the levels_back preceding columns, as two contiguous id ranges.
struct ConnectionDomain {
  int n_inputs = 0;
  int grid_lo = 0;
  int grid_hi = 0;  // one past the end

  int size() const { return n_inputs + (grid_hi - grid_lo); }
  int nth(int idx) const { return idx < n_inputs ? idx : grid_lo + (idx - n_inputs); }
  bool contains(int id) const {
    return (id >= 0 && id < n_inputs) || (id >= grid_lo && id < grid_hi);
  }
};

ConnectionDomain domain_for(const CgpConfig& cfg, int column) {
  ConnectionDomain d;
  d.n_inputs = cfg.n_inputs;
  const int first_col = std::max(1, column - cfg.levels_back);
  const int last_col = column - 1;
  if (last_col < first_col) {
    d.grid_lo = d.grid_hi = cfg.n_inputs;
  } else {
    d.grid_lo = cfg.n_inputs + (first_col - 1) * cfg.n_rows;
    d.grid_hi = cfg.n_inputs + last_col * cfg.n_rows;
  }
  return d;
}

std::vector<int> active_with(const Genotype& g, const Catalog& cat) {
  std::vector<char> mark(static_cast<std::size_t>(g.config.node_count()), 0);
  std::vector<int> stack(g.output_genes.begin(), g.output_genes.end());
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (id < g.config.n_inputs || mark[static_cast<std::size_t>(id)]) continue;
    mark[static_cast<std::size_t>(id)] = 1;
    const NodeGene& gene = g.gene_of(id);
    stack.push_back(gene.inputs[0]);
    if (cat.at(gene.function_id).arity == 2) stack.push_back(gene.inputs[1]);
  }
  std::vector<int> active;
  for (int id = g.config.n_inputs; id < g.config.node_count(); ++id)
    if (mark[static_cast<std::size_t>(id)]) active.push_back(id);
  return active;
}

bool window_ok(const Genotype& g, const Catalog& cat) {
  const int n = static_cast<int>(active_with(g, cat).size());
  return n >= g.config.min_active && n <= g.config.max_active;
}

// One rate-per-field pass over every gene. Resampling draws uniformly over
// the full domain, so a field can land on its old value.
Genotype mutate_all_fields(const Genotype& g, const Catalog& cat, RngStream& rng,
                           MutationStats& stats) {
  Genotype h = g;
  const double rate = g.config.mutation_rate;
  for (int i = 0; i < g.config.grid_size(); ++i) {
    const int id = g.config.n_inputs + i;
    const ConnectionDomain dom = domain_for(g.config, g.column_of(id));
    NodeGene& gene = h.genes[static_cast<std::size_t>(i)];
    ++stats.fields_considered;
    if (rng.bernoulli(rate)) {
      gene.function_id = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cat.size())));
      ++stats.fields_resampled;
    }
    for (int slot = 0; slot < 2; ++slot) {
      ++stats.fields_considered;
      if (rng.bernoulli(rate)) {
        gene.inputs[static_cast<std::size_t>(slot)] =
            dom.nth(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(dom.size()))));
        ++stats.fields_resampled;
      }
    }
  }
  for (int& og : h.output_genes) {
    ++stats.fields_considered;
    if (rng.bernoulli(rate)) {
      og = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(g.config.node_count())));
      ++stats.fields_resampled;
    }
  }
  return h;
}

std::vector<int> signature_with(const Genotype& g, const Catalog& cat) {
  const auto act = active_with(g, cat);
  std::vector<int> remap(static_cast<std::size_t>(g.config.node_count()), -1);
  for (int i = 0; i < g.config.n_inputs; ++i) remap[static_cast<std::size_t>(i)] = i;
  for (std::size_t pos = 0; pos < act.size(); ++pos)
    remap[static_cast<std::size_t>(act[pos])] = g.config.n_inputs + static_cast<int>(pos);

  std::vector<int> sig;
  sig.reserve(act.size() * 3 + g.output_genes.size());
  for (int id : act) {
    const NodeGene& gene = g.gene_of(id);
    sig.push_back(gene.function_id);
    sig.push_back(remap[static_cast<std::size_t>(gene.inputs[0])]);
    sig.push_back(cat.at(gene.function_id).arity == 2
                      ? remap[static_cast<std::size_t>(gene.inputs[1])]
                      : -1);
  }
  for (int og : g.output_genes) sig.push_back(remap[static_cast<std::size_t>(og)]);
  return sig;
}

}  // namespace

void CgpConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigInfeasible(msg); };
  if (n_rows < 1) fail("n_rows must be >= 1");
  if (n_cols < 1) fail("n_cols must be >= 1");
  if (levels_back < 1) fail("levels_back must be >= 1");
  if (n_inputs < 1) fail("n_inputs must be >= 1");
  if (n_outputs < 1) fail("n_outputs must be >= 1");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) fail("mutation_rate must lie in [0,1]");
  if (min_active < 0) fail("min_active must be >= 0");
  if (min_active > max_active) fail("min_active must not exceed max_active");
  if (min_active > grid_size()) fail("min_active exceeds grid size");
  if (channels.empty()) fail("channels must name at least one variant");
  for (int c : channels)
    if (c < 1) fail("channel counts must be positive");
}

std::vector<int> active_nodes(const Genotype& g) {
  return active_with(g, g.config.make_catalog());
}

Genotype random_genotype(const CgpConfig& config, RngStream& rng) {
  config.validate();
  const Catalog cat = config.make_catalog();
  for (int attempt = 0; attempt < kAttemptBudget; ++attempt) {
    Genotype g;
    g.config = config;
    g.genes.resize(static_cast<std::size_t>(config.grid_size()));
    g.output_genes.resize(static_cast<std::size_t>(config.n_outputs));
    for (int i = 0; i < config.grid_size(); ++i) {
      const int id = config.n_inputs + i;
      const ConnectionDomain dom = domain_for(config, g.column_of(id));
      NodeGene& gene = g.genes[static_cast<std::size_t>(i)];
      gene.function_id = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cat.size())));
      for (int slot = 0; slot < 2; ++slot)
        gene.inputs[static_cast<std::size_t>(slot)] =
            dom.nth(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(dom.size()))));
    }
    for (int& og : g.output_genes)
      og = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(config.node_count())));
    if (window_ok(g, cat)) return g;
  }
  throw ConfigInfeasible("no random genotype satisfied the active window in " +
                         std::to_string(kAttemptBudget) + " attempts");
}

Genotype point_mutation(const Genotype& g, RngStream& rng, MutationStats* stats) {
  const Catalog cat = g.config.make_catalog();
  for (int attempt = 0; attempt < kAttemptBudget; ++attempt) {
    MutationStats local;
    Genotype h = mutate_all_fields(g, cat, rng, local);
    if (window_ok(h, cat)) {
      if (stats) {
        stats->fields_considered += local.fields_considered;
        stats->fields_resampled += local.fields_resampled;
        stats->reapplications += attempt;
      }
      return h;
    }
  }
  throw MutationStuck("point mutation found no offspring inside the active window in " +
                      std::to_string(kAttemptBudget) + " attempts");
}

Genotype forced_mutation(const Genotype& g, RngStream& rng, MutationStats* stats) {
  const Catalog cat = g.config.make_catalog();
  const std::vector<int> parent_sig = signature_with(g, cat);
  for (int attempt = 0; attempt < kAttemptBudget; ++attempt) {
    MutationStats local;
    Genotype h = point_mutation(g, rng, &local);
    if (signature_with(h, cat) != parent_sig) {
      if (stats) {
        stats->fields_considered += local.fields_considered;
        stats->fields_resampled += local.fields_resampled;
        stats->reapplications += local.reapplications + attempt;
      }
      return h;
    }
  }
  throw MutationStuck("forced mutation produced no new phenotype in " +
                      std::to_string(kAttemptBudget) + " attempts");
}

Genotype neutral_mutation(const Genotype& g, RngStream& rng, MutationStats* stats) {
  const Catalog cat = g.config.make_catalog();
  std::vector<char> active(static_cast<std::size_t>(g.config.node_count()), 0);
  for (int id : active_with(g, cat)) active[static_cast<std::size_t>(id)] = 1;

  Genotype h = g;
  const double rate = g.config.mutation_rate;
  for (int i = 0; i < g.config.grid_size(); ++i) {
    const int id = g.config.n_inputs + i;
    if (active[static_cast<std::size_t>(id)]) continue;
    const ConnectionDomain dom = domain_for(g.config, g.column_of(id));
    NodeGene& gene = h.genes[static_cast<std::size_t>(i)];
    if (stats) ++stats->fields_considered;
    if (rng.bernoulli(rate)) {
      gene.function_id = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cat.size())));
      if (stats) ++stats->fields_resampled;
    }
    for (int slot = 0; slot < 2; ++slot) {
      if (stats) ++stats->fields_considered;
      if (rng.bernoulli(rate)) {
        gene.inputs[static_cast<std::size_t>(slot)] =
            dom.nth(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(dom.size()))));
        if (stats) ++stats->fields_resampled;
      }
    }
  }
  return h;
}

std::vector<int> phenotype_signature(const Genotype& g) {
  return signature_with(g, g.config.make_catalog());
}

bool check_connections(const Genotype& g) {
  if (static_cast<int>(g.genes.size()) != g.config.grid_size()) return false;
  if (static_cast<int>(g.output_genes.size()) != g.config.n_outputs) return false;
  const Catalog cat = g.config.make_catalog();
  for (int i = 0; i < g.config.grid_size(); ++i) {
    const int id = g.config.n_inputs + i;
    const NodeGene& gene = g.genes[static_cast<std::size_t>(i)];
    if (gene.function_id < 0 || gene.function_id >= cat.size()) return false;
    const ConnectionDomain dom = domain_for(g.config, g.column_of(id));
    for (int slot = 0; slot < 2; ++slot)
      if (!dom.contains(gene.inputs[static_cast<std::size_t>(slot)])) return false;
  }
  for (int og : g.output_genes)
    if (og < 0 || og >= g.config.node_count()) return false;
  return true;
}

std::string serialize(const Genotype& g) {
  std::ostringstream os;
  os << kGenotypeFormat << "\n";
  os << "rows=" << g.config.n_rows << " cols=" << g.config.n_cols
     << " levels_back=" << g.config.levels_back << " inputs=" << g.config.n_inputs
     << " outputs=" << g.config.n_outputs << " rate=" << std::setprecision(17)
     << g.config.mutation_rate << " min_active=" << g.config.min_active
     << " max_active=" << g.config.max_active << " set=" << to_string(g.config.function_set)
     << " channels=";
  for (std::size_t i = 0; i < g.config.channels.size(); ++i)
    os << (i ? "," : "") << g.config.channels[i];
  os << "\n";
  for (const NodeGene& gene : g.genes)
    os << gene.function_id << "," << gene.inputs[0] << "," << gene.inputs[1] << "\n";
  for (int og : g.output_genes) os << "out " << og << "\n";
  return os.str();
}

Genotype parse_genotype(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw CorruptRecord("genotype: empty input");
  if (line != kGenotypeFormat) {
    if (line.rfind("cgpnas-genotype/", 0) == 0)
      throw VersionMismatch("genotype: unsupported format '" + line + "'");
    throw CorruptRecord("genotype: missing format tag");
  }
  if (!std::getline(is, line)) throw CorruptRecord("genotype: missing header");

  Genotype g;
  std::istringstream header(line);
  std::string token;
  std::size_t seen = 0;
  while (header >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw CorruptRecord("genotype: bad header token '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "rows") g.config.n_rows = std::stoi(value);
      else if (key == "cols") g.config.n_cols = std::stoi(value);
      else if (key == "levels_back") g.config.levels_back = std::stoi(value);
      else if (key == "inputs") g.config.n_inputs = std::stoi(value);
      else if (key == "outputs") g.config.n_outputs = std::stoi(value);
      else if (key == "rate") g.config.mutation_rate = std::stod(value);
      else if (key == "min_active") g.config.min_active = std::stoi(value);
      else if (key == "max_active") g.config.max_active = std::stoi(value);
      else if (key == "set") g.config.function_set = parse_function_set(value);
      else if (key == "channels") {
        g.config.channels.clear();
        std::istringstream cs(value);
        std::string c;
        while (std::getline(cs, c, ',')) g.config.channels.push_back(std::stoi(c));
      } else {
        throw CorruptRecord("genotype: unknown header key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw CorruptRecord("genotype: bad value for '" + key + "'");
    } catch (const std::out_of_range&) {
      throw CorruptRecord("genotype: bad value for '" + key + "'");
    }
    ++seen;
  }
  if (seen != 10) throw CorruptRecord("genotype: header is missing keys");
  try {
    g.config.validate();
  } catch (const ConfigInfeasible& e) {
    throw CorruptRecord(std::string("genotype: invalid config: ") + e.what());
  }

  g.genes.resize(static_cast<std::size_t>(g.config.grid_size()));
  for (NodeGene& gene : g.genes) {
    if (!std::getline(is, line)) throw CorruptRecord("genotype: truncated gene list");
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    row >> gene.function_id >> c1 >> gene.inputs[0] >> c2 >> gene.inputs[1];
    if (row.fail() || c1 != ',' || c2 != ',')
      throw CorruptRecord("genotype: bad gene line '" + line + "'");
  }
  g.output_genes.resize(static_cast<std::size_t>(g.config.n_outputs));
  for (int& og : g.output_genes) {
    if (!std::getline(is, line)) throw CorruptRecord("genotype: truncated output genes");
    std::istringstream row(line);
    std::string tag;
    row >> tag >> og;
    if (row.fail() || tag != "out") throw CorruptRecord("genotype: bad output line '" + line + "'");
  }
  if (!check_connections(g)) throw CorruptRecord("genotype: connection genes out of range");
  return g;
}

void save_genotype(const Genotype& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write genotype to '" + path + "'");
  out << serialize(g);
}

Genotype load_genotype_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open genotype file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_genotype(buf.str());
}

}  // namespace cgpnas

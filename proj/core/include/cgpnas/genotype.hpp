#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgpnas/catalog.hpp"
#include "cgpnas/errors.hpp"
#include "cgpnas/rng.hpp"

namespace cgpnas {

// Grid geometry, connectivity range, mutation rate and the active-node
// window a search runs under. Node ids: inputs occupy 0..n_inputs-1
// (column 0), grid nodes follow column by column, so the node at row r of
// 1-based column c has id n_inputs + (c-1)*n_rows + r.
struct CgpConfig {
  int n_rows = 5;
  int n_cols = 30;
  int levels_back = 10;
  int n_inputs = 1;
  int n_outputs = 1;
  double mutation_rate = 0.05;
  int min_active = 10;
  int max_active = 50;
  FunctionSet function_set = FunctionSet::Conv;
  // Output-channel variants the block functions are instantiated with.
  std::vector<int> channels = {32, 64, 128};

  int grid_size() const { return n_rows * n_cols; }
  int node_count() const { return n_inputs + grid_size(); }
  Catalog make_catalog() const { return Catalog::build(function_set, channels); }
  void validate() const;  // throws ConfigInfeasible

  bool operator==(const CgpConfig&) const = default;
};

// One grid node: a catalog index plus one connection gene per input slot.
// Slot 1 is carried (and mutated) even for unary functions; it only
// matters if a later mutation switches the node to a binary function.
struct NodeGene {
  int function_id = 0;
  std::array<int, 2> inputs{0, 0};

  bool operator==(const NodeGene&) const = default;
};

struct Genotype {
  CgpConfig config;
  std::vector<NodeGene> genes;    // grid_size() entries, column-major id order
  std::vector<int> output_genes;  // n_outputs entries, each any node id

  // 0 for input nodes, 1-based grid column otherwise.
  int column_of(int node_id) const {
    if (node_id < config.n_inputs) return 0;
    return (node_id - config.n_inputs) / config.n_rows + 1;
  }
  const NodeGene& gene_of(int node_id) const {
    return genes[static_cast<std::size_t>(node_id - config.n_inputs)];
  }

  bool operator==(const Genotype&) const = default;
};

// Grid node ids reachable from the output genes through used input slots,
// ascending. Connections only ever point to earlier columns, so ascending
// id order is also a topological order.
std::vector<int> active_nodes(const Genotype& g);

// Retry and field counters a mutation call can report through.
struct MutationStats {
  int fields_considered = 0;
  int fields_resampled = 0;
  int reapplications = 0;  // attempts discarded before one was accepted
};

// Uniform random genotype whose active-node count lies inside the
// configured window. Resamples wholesale up to the attempt budget, then
// throws ConfigInfeasible.
Genotype random_genotype(const CgpConfig& config, RngStream& rng);

// Each gene field is independently resampled with probability
// mutation_rate, uniformly over its valid domain (the current value
// included). The whole operator is re-applied to the original genotype
// until the offspring's active count is inside the window; past the
// attempt budget it throws MutationStuck.
Genotype point_mutation(const Genotype& g, RngStream& rng, MutationStats* stats = nullptr);

// point_mutation repeated until the decoded architecture differs from the
// parent's. Guarantees offspring are phenotypically new.
Genotype forced_mutation(const Genotype& g, RngStream& rng, MutationStats* stats = nullptr);

// Resamples fields of inactive nodes only; the phenotype is untouched.
// Applied to the parent when a generation produced no improvement.
Genotype neutral_mutation(const Genotype& g, RngStream& rng, MutationStats* stats = nullptr);

// Compact encoding of the decoded architecture: function ids and rewired
// connections of the active subgraph with node ids relabelled by active
// position. Two genotypes over the same catalog decode to equal graphs
// exactly when their signatures are equal.
std::vector<int> phenotype_signature(const Genotype& g);

// True when every gene lies inside its valid domain (function ids in
// catalog range, connections within levels-back reach, outputs in range).
bool check_connections(const Genotype& g);

std::string serialize(const Genotype& g);
Genotype parse_genotype(const std::string& text);  // throws CorruptRecord / VersionMismatch
void save_genotype(const Genotype& g, const std::string& path);
Genotype load_genotype_file(const std::string& path);  // throws MissingFile

}  // namespace cgpnas

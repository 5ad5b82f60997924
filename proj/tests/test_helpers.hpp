#pragma once

#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cgpnas/catalog.hpp"
#include "cgpnas/genotype.hpp"

namespace cgpnas::testutil {

// Reference restatement of the shape rules, kept deliberately separate
// from the library implementation so the two can disagree.
inline TensorShape oracle_shape(const FunctionSpec& f, TensorShape a,
                                std::optional<TensorShape> b = std::nullopt) {
  auto bad = TensorShape{0, 0, 0};
  if (a.rows < 1 || a.cols < 1 || a.channels < 1) return bad;
  if (b && (b->rows < 1 || b->cols < 1 || b->channels < 1)) return bad;
  switch (f.kind) {
    case FunctionKind::ConvBlock:
    case FunctionKind::ResBlock:
      return TensorShape{a.rows, a.cols, f.out_channels};
    case FunctionKind::MaxPool:
    case FunctionKind::AvgPool: {
      const int r = a.rows / 2, c = a.cols / 2;
      if (r < 1 || c < 1) return bad;
      return TensorShape{r, c, a.channels};
    }
    case FunctionKind::Sum:
      return TensorShape{a.rows < b->rows ? a.rows : b->rows,
                         a.cols < b->cols ? a.cols : b->cols,
                         a.channels > b->channels ? a.channels : b->channels};
    case FunctionKind::Concat:
      return TensorShape{a.rows < b->rows ? a.rows : b->rows,
                         a.cols < b->cols ? a.cols : b->cols,
                         a.channels + b->channels};
  }
  return bad;
}

// Reference parameter formula: kernel weights + bias + scale/shift.
inline long long oracle_params(const FunctionSpec& f, int in_channels) {
  if (f.kind == FunctionKind::ConvBlock || f.kind == FunctionKind::ResBlock) {
    return 1LL * f.kernel * f.kernel * in_channels * f.out_channels + 3LL * f.out_channels;
  }
  return 0;
}

// Minimal structural validator for the DOT output: a digraph wrapper, then
// only node statements `nK [..];` and edge statements `nA -> nB ...;`.
inline bool dot_well_formed(const std::string& dot, int* node_count = nullptr,
                            int* edge_count = nullptr) {
  std::istringstream is(dot);
  std::string line;
  if (!std::getline(is, line) || line.rfind("digraph ", 0) != 0 || line.back() != '{')
    return false;
  int nodes = 0, edges = 0;
  bool closed = false;
  while (std::getline(is, line)) {
    std::string t = line;
    t.erase(0, t.find_first_not_of(" \t"));
    if (t.empty()) continue;
    if (t == "}") { closed = true; continue; }
    if (closed) return false;
    if (t.back() != ';') return false;
    if (t.rfind("rankdir", 0) == 0) continue;
    if (t[0] != 'n' || !std::isdigit(static_cast<unsigned char>(t[1]))) return false;
    if (t.find("->") != std::string::npos) ++edges;
    else if (t.find('[') != std::string::npos) ++nodes;
    else return false;
  }
  if (node_count) *node_count = nodes;
  if (edge_count) *edge_count = edges;
  return closed;
}

// Hand-built genotype over a 1-row grid: node i applies function_ids[i] to
// the previous node (binary functions also read `second[i]`). The output
// gene points at the last grid node.
inline Genotype chain_genotype(const CgpConfig& base, const std::vector<int>& function_ids,
                               const std::vector<std::array<int, 2>>& wiring) {
  Genotype g;
  g.config = base;
  g.config.n_rows = 1;
  g.config.n_cols = static_cast<int>(function_ids.size());
  g.config.levels_back = static_cast<int>(function_ids.size());
  for (std::size_t i = 0; i < function_ids.size(); ++i)
    g.genes.push_back({function_ids[i], wiring[i]});
  g.output_genes = {static_cast<int>(function_ids.size())};
  return g;
}

}  // namespace cgpnas::testutil

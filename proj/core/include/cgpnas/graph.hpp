#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgpnas/catalog.hpp"
#include "cgpnas/genotype.hpp"

namespace cgpnas {

enum class GraphNodeKind { Input, Function, Output };

// One layer of the decoded architecture. `inputs` holds producer node ids
// by slot; unused slots stay -1. Shapes are Invalid until infer_shapes ran.
struct GraphNode {
  GraphNodeKind kind = GraphNodeKind::Function;
  FunctionSpec fn{};
  std::array<int, 2> inputs{-1, -1};
  TensorShape shape = TensorShape::invalid();
  // Originating genotype node id; -1 for the synthesized output layer.
  int genotype_id = -1;

  int arity() const { return kind == GraphNodeKind::Function ? fn.arity : (kind == GraphNodeKind::Output ? 1 : 0); }
};

// Feed-forward architecture in topological node order: input nodes first,
// then active function nodes ascending by genotype id, then one output
// node (global flatten + fully connected classifier + softmax).
struct LayerGraph {
  std::vector<GraphNode> nodes;
  int n_inputs = 1;
  int class_count = 10;

  int output_node() const { return static_cast<int>(nodes.size()) - 1; }
  int function_count() const {
    return static_cast<int>(nodes.size()) - n_inputs - 1;
  }
  bool shaped() const {
    for (const GraphNode& n : nodes)
      if (!n.shape.valid()) return false;
    return !nodes.empty();
  }
};

// Architecture the genotype encodes: the active subgraph plus the
// classifier head. Only the first output gene feeds the head; extra
// outputs have no meaning for a single classifier.
LayerGraph decode(const Genotype& g, const Catalog& cat, int class_count = 10);

// Assigns a shape to every node, walking in topological order from
// input_shape. Throws InvalidArchitecture carrying the first node whose
// shape collapses.
LayerGraph infer_shapes(LayerGraph graph, const TensorShape& input_shape);

// Structural equality: same node kinds, FunctionSpecs and slot wiring at
// every position. Shapes are derived data and not compared.
bool graph_equal(const LayerGraph& a, const LayerGraph& b);

// Learnable parameters of the whole architecture including the classifier
// head. Requires a shaped graph.
std::int64_t total_param_count(const LayerGraph& graph);

struct MemoryEstimate {
  std::int64_t activation_bytes = 0;  // one f32 copy of every node output at batch size
  std::int64_t parameter_bytes = 0;   // f32 params x3 (value, gradient, optimizer slot)
  std::int64_t total_bytes = 0;       // 2x activations (forward + gradients) + parameters
};
MemoryEstimate estimate_memory(const LayerGraph& graph, int batch_size);

// Graphviz rendering with one statement per node and edge, deterministic
// across runs. Shape annotations appear when the graph is shaped.
std::string to_dot(const LayerGraph& graph);

// Versioned JSON export: nodes (symbol, shape, parameter count) and edges
// (from, to, slot).
std::string to_json(const LayerGraph& graph);

}  // namespace cgpnas

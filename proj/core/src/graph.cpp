#include "cgpnas/graph.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cgpnas/version.hpp"

namespace cgpnas {
namespace {

std::string node_label(const LayerGraph& graph, int id) {
  const GraphNode& n = graph.nodes[static_cast<std::size_t>(id)];
  std::ostringstream os;
  switch (n.kind) {
    case GraphNodeKind::Input: os << "Input"; break;
    case GraphNodeKind::Function: os << symbol(n.fn); break;
    case GraphNodeKind::Output: os << "Softmax(" << graph.class_count << ")"; break;
  }
  if (n.shape.valid() && n.kind != GraphNodeKind::Output)
    os << " " << to_string(n.shape);
  return os.str();
}

}  // namespace

LayerGraph decode(const Genotype& g, const Catalog& cat, int class_count) {
  if (class_count < 1) throw std::invalid_argument("decode: class_count must be >= 1");
  if (g.output_genes.empty()) throw std::invalid_argument("decode: genotype has no output gene");

  // Reachability under the supplied catalog's arities. The catalog decides
  // which input slots are real connections.
  std::vector<char> mark(static_cast<std::size_t>(g.config.node_count()), 0);
  std::vector<int> stack{g.output_genes[0]};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (id < g.config.n_inputs || mark[static_cast<std::size_t>(id)]) continue;
    mark[static_cast<std::size_t>(id)] = 1;
    const NodeGene& gene = g.gene_of(id);
    stack.push_back(gene.inputs[0]);
    if (cat.at(gene.function_id).arity == 2) stack.push_back(gene.inputs[1]);
  }
  std::vector<int> act;
  for (int id = g.config.n_inputs; id < g.config.node_count(); ++id)
    if (mark[static_cast<std::size_t>(id)]) act.push_back(id);

  std::vector<int> remap(static_cast<std::size_t>(g.config.node_count()), -1);
  for (int i = 0; i < g.config.n_inputs; ++i) remap[static_cast<std::size_t>(i)] = i;
  for (std::size_t pos = 0; pos < act.size(); ++pos)
    remap[static_cast<std::size_t>(act[pos])] = g.config.n_inputs + static_cast<int>(pos);

  LayerGraph graph;
  graph.n_inputs = g.config.n_inputs;
  graph.class_count = class_count;
  for (int i = 0; i < g.config.n_inputs; ++i) {
    GraphNode node;
    node.kind = GraphNodeKind::Input;
    node.genotype_id = i;
    graph.nodes.push_back(node);
  }
  for (int id : act) {
    const NodeGene& gene = g.gene_of(id);
    GraphNode node;
    node.kind = GraphNodeKind::Function;
    node.fn = cat.at(gene.function_id);
    node.genotype_id = id;
    node.inputs[0] = remap[static_cast<std::size_t>(gene.inputs[0])];
    if (node.fn.arity == 2) node.inputs[1] = remap[static_cast<std::size_t>(gene.inputs[1])];
    graph.nodes.push_back(node);
  }
  GraphNode head;
  head.kind = GraphNodeKind::Output;
  head.inputs[0] = remap[static_cast<std::size_t>(g.output_genes[0])];
  graph.nodes.push_back(head);
  return graph;
}

LayerGraph infer_shapes(LayerGraph graph, const TensorShape& input_shape) {
  if (!input_shape.valid())
    throw InvalidArchitecture(0, "input shape " + to_string(input_shape) + " is invalid");
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    GraphNode& n = graph.nodes[i];
    switch (n.kind) {
      case GraphNodeKind::Input:
        n.shape = input_shape;
        break;
      case GraphNodeKind::Function: {
        const TensorShape& a = graph.nodes[static_cast<std::size_t>(n.inputs[0])].shape;
        std::optional<TensorShape> b;
        if (n.fn.arity == 2) b = graph.nodes[static_cast<std::size_t>(n.inputs[1])].shape;
        n.shape = output_shape(n.fn, a, b);
        if (!n.shape.valid())
          throw InvalidArchitecture(static_cast<int>(i),
                                    symbol(n.fn) + " at node " + std::to_string(i) +
                                        " collapses on input " + to_string(a));
        break;
      }
      case GraphNodeKind::Output:
        n.shape = {1, 1, graph.class_count};
        break;
    }
  }
  return graph;
}

bool graph_equal(const LayerGraph& a, const LayerGraph& b) {
  if (a.n_inputs != b.n_inputs || a.class_count != b.class_count) return false;
  if (a.nodes.size() != b.nodes.size()) return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    const GraphNode& x = a.nodes[i];
    const GraphNode& y = b.nodes[i];
    if (x.kind != y.kind || x.inputs != y.inputs) return false;
    if (x.kind == GraphNodeKind::Function && !(x.fn == y.fn)) return false;
  }
  return true;
}

std::int64_t total_param_count(const LayerGraph& graph) {
  if (!graph.shaped()) throw std::logic_error("total_param_count needs a shaped graph");
  std::int64_t total = 0;
  for (const GraphNode& n : graph.nodes) {
    if (n.kind == GraphNodeKind::Function) {
      total += param_count(n.fn, graph.nodes[static_cast<std::size_t>(n.inputs[0])].shape);
    } else if (n.kind == GraphNodeKind::Output) {
      const std::int64_t flat =
          graph.nodes[static_cast<std::size_t>(n.inputs[0])].shape.elements();
      total += flat * graph.class_count + graph.class_count;
    }
  }
  return total;
}

MemoryEstimate estimate_memory(const LayerGraph& graph, int batch_size) {
  if (!graph.shaped()) throw std::logic_error("estimate_memory needs a shaped graph");
  if (batch_size < 1) throw std::invalid_argument("estimate_memory: batch_size must be >= 1");
  MemoryEstimate est;
  for (const GraphNode& n : graph.nodes)
    est.activation_bytes += n.shape.elements() * batch_size * 4;
  // value + gradient + one optimizer slot per parameter
  est.parameter_bytes = total_param_count(graph) * 4 * 3;
  // activations are held twice: forward values and backward gradients
  est.total_bytes = 2 * est.activation_bytes + est.parameter_bytes;
  return est;
}

std::string to_dot(const LayerGraph& graph) {
  std::ostringstream os;
  os << "digraph architecture {\n";
  os << "  rankdir=TB;\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& n = graph.nodes[i];
    os << "  n" << i << " [label=\"" << node_label(graph, static_cast<int>(i)) << "\"";
    if (n.kind != GraphNodeKind::Function) os << ", shape=box";
    os << "];\n";
  }
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& n = graph.nodes[i];
    for (int slot = 0; slot < 2; ++slot) {
      const int from = n.inputs[static_cast<std::size_t>(slot)];
      if (from < 0) continue;
      os << "  n" << from << " -> n" << i;
      if (n.arity() == 2) os << " [label=\"" << slot << "\"]";
      os << ";\n";
    }
  }
  os << "}\n";
  return os.str();
}

std::string to_json(const LayerGraph& graph) {
  nlohmann::json doc;
  doc["schema"] = kGraphSchema;
  doc["class_count"] = graph.class_count;
  doc["n_inputs"] = graph.n_inputs;
  const bool shaped = graph.shaped();

  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& n = graph.nodes[i];
    nlohmann::json jn;
    jn["id"] = i;
    switch (n.kind) {
      case GraphNodeKind::Input: jn["kind"] = "input"; jn["symbol"] = "Input"; break;
      case GraphNodeKind::Function: jn["kind"] = "function"; jn["symbol"] = symbol(n.fn); break;
      case GraphNodeKind::Output:
        jn["kind"] = "output";
        jn["symbol"] = "Softmax(" + std::to_string(graph.class_count) + ")";
        break;
    }
    if (n.shape.valid()) jn["shape"] = {n.shape.rows, n.shape.cols, n.shape.channels};
    if (shaped) {
      std::int64_t params = 0;
      if (n.kind == GraphNodeKind::Function)
        params = param_count(n.fn, graph.nodes[static_cast<std::size_t>(n.inputs[0])].shape);
      else if (n.kind == GraphNodeKind::Output)
        params = graph.nodes[static_cast<std::size_t>(n.inputs[0])].shape.elements() *
                     graph.class_count +
                 graph.class_count;
      jn["param_count"] = params;
    }
    nodes.push_back(jn);
  }
  doc["nodes"] = nodes;

  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    for (int slot = 0; slot < 2; ++slot) {
      const int from = graph.nodes[i].inputs[static_cast<std::size_t>(slot)];
      if (from < 0) continue;
      edges.push_back({{"from", from}, {"to", i}, {"slot", slot}});
    }
  }
  doc["edges"] = edges;
  if (shaped) doc["total_param_count"] = total_param_count(graph);
  return doc.dump(2);
}

}  // namespace cgpnas

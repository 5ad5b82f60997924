#pragma once

#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cgpnas/graph.hpp"
#include "cgpnas/layers.hpp"
#include "cgpnas/version.hpp"

namespace cgpnas {

// Executable form of a shaped layer graph. Holds one activation and one
// gradient tensor per node; both are resized when the batch size changes.
template <typename S>
class Network {
 public:
  Network(const LayerGraph& graph, RngStream& rng) : graph_(graph) {
    if (!graph_.shaped()) throw std::logic_error("Network needs a shaped graph");
    if (graph_.n_inputs != 1)
      throw std::invalid_argument("Network drives exactly one input node");
    layers_.resize(graph_.nodes.size());
    for (std::size_t i = 1; i < graph_.nodes.size(); ++i) {
      const GraphNode& n = graph_.nodes[i];
      const TensorShape in0 = graph_.nodes[static_cast<std::size_t>(n.inputs[0])].shape;
      const TensorShape in1 = n.inputs[1] >= 0
                                  ? graph_.nodes[static_cast<std::size_t>(n.inputs[1])].shape
                                  : TensorShape::invalid();
      layers_[i] = make_layer<S>(n, in0, in1, graph_.class_count);
      layers_[i]->init(rng);
    }
  }

  const LayerGraph& graph() const { return graph_; }

  // Runs the graph and returns the class logits, shaped (B, 1, 1, classes).
  const Tensor4<S>& forward(const Tensor4<S>& input, RunMode mode) {
    if (!(input.shape3() == graph_.nodes[0].shape))
      throw ShapeMismatch("forward: input is " + to_string(input.shape3()) + ", network wants " +
                          to_string(graph_.nodes[0].shape));
    ensure_buffers(input.batch());
    acts_[0] = input;
    for (std::size_t i = 1; i < graph_.nodes.size(); ++i)
      layers_[i]->forward(inputs_of(i), acts_[i], mode);
    return acts_.back();
  }

  // Backpropagates d(loss)/d(logits) through the whole graph; call after
  // forward on the same batch. Parameter gradients accumulate.
  void backward(const Tensor4<S>& grad_logits) {
    for (Tensor4<S>& g : grads_) g.fill(S(0));
    grads_.back() = grad_logits;
    for (std::size_t i = graph_.nodes.size(); i-- > 1;) {
      std::vector<Tensor4<S>*> gin;
      for (int slot = 0; slot < 2; ++slot) {
        const int src = graph_.nodes[i].inputs[static_cast<std::size_t>(slot)];
        if (src >= 0) gin.push_back(&grads_[static_cast<std::size_t>(src)]);
      }
      layers_[i]->backward(acts_[i], grads_[i], inputs_of(i), gin);
    }
  }

  std::vector<ParamSlot<S>*> param_slots() {
    std::vector<ParamSlot<S>*> out;
    for (auto& l : layers_)
      if (l)
        for (ParamSlot<S>* p : l->params()) out.push_back(p);
    return out;
  }

  std::int64_t param_count() {
    std::int64_t total = 0;
    for (ParamSlot<S>* p : param_slots()) total += static_cast<std::int64_t>(p->value.size());
    return total;
  }

  void zero_grads() {
    for (ParamSlot<S>* p : param_slots()) std::fill(p->grad.begin(), p->grad.end(), S(0));
  }

  // Class predictions under inference-mode statistics; ties resolve to the
  // lowest class index.
  std::vector<int> predict(const Tensor4<S>& input) {
    const Tensor4<S>& logits = forward(input, RunMode::Infer);
    std::vector<int> out(static_cast<std::size_t>(input.batch()));
    for (int b = 0; b < input.batch(); ++b) {
      const S* row = logits.data() + static_cast<std::size_t>(b) * graph_.class_count;
      int best = 0;
      for (int k = 1; k < graph_.class_count; ++k)
        if (row[k] > row[best]) best = k;
      out[static_cast<std::size_t>(b)] = best;
    }
    return out;
  }

  // Weight snapshot: magic tag, array count, then per array a name, an
  // explicit shape and raw little-endian f32 data. Includes normalization
  // running statistics so inference reproduces exactly.
  void save_weights(std::ostream& os) {
    std::vector<std::pair<std::string, std::pair<std::vector<int>, std::vector<S>*>>> arrays;
    collect(arrays);
    os.write(kWeightsMagic, 8);
    write_u32(os, static_cast<std::uint32_t>(arrays.size()));
    for (auto& [name, shaped] : arrays) {
      write_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(os, static_cast<std::uint32_t>(shaped.first.size()));
      for (int d : shaped.first) write_u32(os, static_cast<std::uint32_t>(d));
      for (S v : *shaped.second) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(os, bits);
      }
    }
  }

  void load_weights(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kWeightsMagic, 7) != 0)
      throw CorruptRecord("weights: bad magic");
    if (magic[7] != kWeightsMagic[7])
      throw VersionMismatch("weights: unsupported format revision");
    std::vector<std::pair<std::string, std::pair<std::vector<int>, std::vector<S>*>>> arrays;
    collect(arrays);
    const std::uint32_t count = read_u32(is);
    if (count != arrays.size()) throw CorruptRecord("weights: array count mismatch");
    for (auto& [name, shaped] : arrays) {
      const std::uint32_t name_len = read_u32(is);
      std::string got(name_len, '\0');
      is.read(got.data(), name_len);
      if (!is || got != name) throw CorruptRecord("weights: expected array '" + name + "'");
      const std::uint32_t rank = read_u32(is);
      if (rank != shaped.first.size()) throw CorruptRecord("weights: rank mismatch on " + name);
      std::size_t total = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        const std::uint32_t d = read_u32(is);
        if (static_cast<int>(d) != shaped.first[r])
          throw CorruptRecord("weights: shape mismatch on " + name);
        total *= d;
      }
      if (total != shaped.second->size()) throw CorruptRecord("weights: size mismatch on " + name);
      for (S& v : *shaped.second) {
        const std::uint32_t bits = read_u32(is);
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<S>(f);
      }
      if (!is) throw CorruptRecord("weights: truncated data for " + name);
    }
  }

 private:
  void ensure_buffers(int batch) {
    if (batch == batch_) return;
    batch_ = batch;
    acts_.clear();
    grads_.clear();
    for (const GraphNode& n : graph_.nodes) {
      acts_.emplace_back(batch, n.shape);
      grads_.emplace_back(batch, n.shape);
    }
  }

  std::vector<const Tensor4<S>*> inputs_of(std::size_t i) const {
    std::vector<const Tensor4<S>*> in;
    for (int slot = 0; slot < 2; ++slot) {
      const int src = graph_.nodes[i].inputs[static_cast<std::size_t>(slot)];
      if (src >= 0) in.push_back(&acts_[static_cast<std::size_t>(src)]);
    }
    return in;
  }

  void collect(std::vector<std::pair<std::string, std::pair<std::vector<int>, std::vector<S>*>>>& arrays) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (!layers_[i]) continue;
      const std::string prefix = "n" + std::to_string(i) + ".";
      for (ParamSlot<S>* p : layers_[i]->params())
        arrays.push_back({prefix + p->name, {p->dims, &p->value}});
      for (NamedArray<S> s : layers_[i]->state())
        arrays.push_back({prefix + s.name, {s.dims, s.data}});
    }
  }

  static void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  static std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  LayerGraph graph_;
  std::vector<std::unique_ptr<Layer<S>>> layers_;
  std::vector<Tensor4<S>> acts_, grads_;
  int batch_ = 0;
};

}  // namespace cgpnas

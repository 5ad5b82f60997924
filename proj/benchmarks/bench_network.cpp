#include <benchmark/benchmark.h>

#include <vector>

#include "cgpnas/graph.hpp"
#include "cgpnas/layers.hpp"
#include "cgpnas/network.hpp"
#include "cgpnas/optimizer.hpp"
#include "cgpnas/rng.hpp"
#include "cgpnas/tensor.hpp"

namespace {

using namespace cgpnas;

GraphNode fn_node(FunctionKind kind, int arity, int co, int k, int in0, int in1 = -1) {
  GraphNode n;
  n.kind = GraphNodeKind::Function;
  n.fn = {kind, arity, co, k};
  n.inputs = {in0, in1};
  return n;
}

// Every layer kind once, on an image-sized input, so the numbers reflect a
// typical candidate rather than the fastest or slowest possible graph.
LayerGraph bench_graph() {
  LayerGraph g;
  g.n_inputs = 1;
  g.class_count = 10;
  GraphNode input;
  input.kind = GraphNodeKind::Input;
  g.nodes.push_back(input);
  g.nodes.push_back(fn_node(FunctionKind::ConvBlock, 1, 32, 3, 0));
  g.nodes.push_back(fn_node(FunctionKind::MaxPool, 1, 0, 0, 1));
  g.nodes.push_back(fn_node(FunctionKind::ResBlock, 1, 32, 3, 2));
  g.nodes.push_back(fn_node(FunctionKind::ResBlock, 1, 64, 5, 3));
  g.nodes.push_back(fn_node(FunctionKind::AvgPool, 1, 0, 0, 1));
  g.nodes.push_back(fn_node(FunctionKind::Sum, 2, 0, 0, 4, 5));
  g.nodes.push_back(fn_node(FunctionKind::Concat, 2, 0, 0, 6, 2));
  GraphNode head;
  head.kind = GraphNodeKind::Output;
  head.inputs = {7, -1};
  g.nodes.push_back(head);
  return infer_shapes(g, {32, 32, 3});
}

Tensor4<float> random_batch(int batch, const TensorShape& shape, RngStream& rng) {
  Tensor4<float> x(batch, shape);
  for (std::size_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(rng.normal());
  return x;
}

void BM_NetworkForward(benchmark::State& state) {
  const LayerGraph graph = bench_graph();
  RngStream rng(7);
  Network<float> net(graph, rng);
  const int batch = static_cast<int>(state.range(0));
  const Tensor4<float> x = random_batch(batch, graph.nodes[0].shape, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, RunMode::Infer));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetworkForward)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

// One full optimization step: forward under training statistics, loss
// gradient, backprop, momentum update.
void BM_NetworkTrainStep(benchmark::State& state) {
  const LayerGraph graph = bench_graph();
  RngStream rng(7);
  Network<float> net(graph, rng);
  OptimizerOptions oo;
  oo.kind = OptimizerKind::SgdMomentum;
  oo.lr = 0.01;
  Optimizer<float> opt(oo, net.param_slots());

  const int batch = static_cast<int>(state.range(0));
  const Tensor4<float> x = random_batch(batch, graph.nodes[0].shape, rng);
  std::vector<int> y(static_cast<std::size_t>(batch));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);

  Tensor4<float> grad;
  for (auto _ : state) {
    net.zero_grads();
    const Tensor4<float>& logits = net.forward(x, RunMode::Train);
    if (!grad.same_dims(logits)) grad = Tensor4<float>(logits.batch(), logits.shape3());
    benchmark::DoNotOptimize(softmax_cross_entropy(logits, y, &grad));
    net.backward(grad);
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetworkTrainStep)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

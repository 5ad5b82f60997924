#include "cgpnas/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cgpnas/errors.hpp"
#include "cgpnas/layers.hpp"

namespace cgpnas {

TrainConfig search_defaults() {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.initial_lr = 0.01;
  cfg.lr_schedule = {{30, 0.001}};
  cfg.epochs = 50;
  cfg.batch_size = 128;
  cfg.weight_decay = 1e-4;
  cfg.augmentation = true;
  cfg.fitness_window = 10;
  return cfg;
}

TrainConfig retrain_defaults() {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::SgdMomentum;
  cfg.initial_lr = 0.01;
  cfg.lr_schedule = {{5, 0.1}, {250, 0.01}, {375, 0.001}};
  cfg.epochs = 500;
  cfg.batch_size = 128;
  cfg.weight_decay = 5e-4;
  cfg.momentum = 0.9;
  cfg.augmentation = true;
  cfg.fitness_window = 10;
  return cfg;
}

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 1 || epoch > cfg.epochs)
    throw EpochOutOfRange("epoch " + std::to_string(epoch) + " outside [1, " +
                          std::to_string(cfg.epochs) + "]");
  double lr = cfg.initial_lr;
  for (const LrPoint& p : cfg.lr_schedule)
    if (p.epoch <= epoch) lr = p.lr;
  return lr;
}

double fitness_from_trace(const std::vector<double>& accuracies, int window) {
  if (accuracies.empty()) return 0.0;
  const std::size_t take =
      std::min(accuracies.size(), static_cast<std::size_t>(std::max(window, 1)));
  return *std::max_element(accuracies.end() - static_cast<long>(take), accuracies.end());
}

const char* failure_name(FailureReason r) {
  switch (r) {
    case FailureReason::None: return "none";
    case FailureReason::OutOfMemoryBudget: return "out_of_memory_budget";
    case FailureReason::InvalidArchitecture: return "invalid_architecture";
    case FailureReason::Diverged: return "diverged";
    default: return "evaluator_error";
  }
}

std::string fitness_json(const FitnessResult& r) {
  nlohmann::json j{{"fitness", r.fitness},
                   {"val_accuracies", r.val_accuracies},
                   {"param_count", r.param_count},
                   {"epochs_trained", r.epochs_trained},
                   {"wall_seconds", r.wall_seconds},
                   {"failure_reason", failure_name(r.reason)}};
  j["test_accuracy"] =
      r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json(nullptr);
  return j.dump();
}

Network<float> build_network(const LayerGraph& shaped, RngStream& rng,
                             std::int64_t budget_bytes, int batch_size) {
  const MemoryEstimate est = estimate_memory(shaped, batch_size);
  if (budget_bytes > 0 && est.total_bytes > budget_bytes)
    throw OutOfMemoryBudget(est.total_bytes, budget_bytes);
  return Network<float>(shaped, rng);
}

TrainingEvaluator::TrainingEvaluator(const Dataset& train, const Dataset& val, TrainConfig cfg,
                                     TrainingLimits limits, const Dataset* test)
    : train_(&train), val_(&val), test_(test), cfg_(std::move(cfg)), limits_(limits) {}

namespace {

double accuracy(Network<float>& net, const Dataset& ds, int batch_size) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  Tensor4<float> x;
  std::vector<int> y;
  std::vector<std::size_t> idx;
  for (std::size_t at = 0; at < ds.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t take = std::min(static_cast<std::size_t>(batch_size), ds.size() - at);
    idx.resize(take);
    std::iota(idx.begin(), idx.end(), at);
    fill_batch(ds, idx, x, y);
    const std::vector<int> pred = net.predict(x);
    for (std::size_t i = 0; i < take; ++i)
      if (pred[i] == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

FitnessResult TrainingEvaluator::evaluate(const Genotype& g, RngStream rng) const {
  const auto start = std::chrono::steady_clock::now();
  FitnessResult fr;
  auto finish = [&](FailureReason reason) -> FitnessResult& {
    fr.reason = reason;
    if (reason != FailureReason::None) fr.fitness = 0.0;
    fr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return fr;
  };
  try {
    const Catalog cat = Catalog::build(g.config.function_set, g.config.channels);
    LayerGraph graph = decode(g, cat, train_->class_count);
    graph = infer_shapes(std::move(graph), train_->images.shape3());
    Network<float> net =
        build_network(graph, rng, limits_.memory_budget_bytes, cfg_.batch_size);
    fr.param_count = net.param_count();

    OptimizerOptions oo;
    oo.kind = cfg_.optimizer;
    oo.lr = cfg_.initial_lr;
    oo.momentum = cfg_.momentum;
    oo.weight_decay = cfg_.weight_decay;
    Optimizer<float> opt(oo, net.param_slots());

    const std::size_t n = train_->size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> idx;
    Tensor4<float> raw, x, grad;
    std::vector<int> y;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      opt.set_lr(lr_at(cfg_, epoch));
      for (std::size_t i = 0; i + 1 < n; ++i)
        std::swap(order[i], order[i + rng.uniform_index(n - i)]);
      for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::size_t take = std::min(static_cast<std::size_t>(cfg_.batch_size), n - at);
        idx.assign(order.begin() + static_cast<long>(at),
                   order.begin() + static_cast<long>(at + take));
        if (cfg_.augmentation) {
          fill_batch(*train_, idx, raw, y);
          if (!x.same_dims(raw)) x = Tensor4<float>(raw.batch(), raw.shape3());
          for (std::size_t s = 0; s < take; ++s) augment_sample(raw, s, rng, x, s);
        } else {
          fill_batch(*train_, idx, x, y);
        }
        net.zero_grads();
        const Tensor4<float>& logits = net.forward(x, RunMode::Train);
        if (!grad.same_dims(logits)) grad = Tensor4<float>(logits.batch(), logits.shape3());
        const double loss = softmax_cross_entropy(logits, y, &grad);
        if (!std::isfinite(loss)) return finish(FailureReason::Diverged);
        net.backward(grad);
        opt.step();
      }
      fr.val_accuracies.push_back(accuracy(net, *val_, cfg_.batch_size));
      fr.epochs_trained = epoch;
    }
    fr.fitness = fitness_from_trace(fr.val_accuracies, cfg_.fitness_window);
    if (test_) fr.test_accuracy = accuracy(net, *test_, cfg_.batch_size);
    return finish(FailureReason::None);
  } catch (const OutOfMemoryBudget&) {
    return finish(FailureReason::OutOfMemoryBudget);
  } catch (const InvalidArchitecture&) {
    return finish(FailureReason::InvalidArchitecture);
  } catch (const Diverged&) {
    return finish(FailureReason::Diverged);
  } catch (const std::exception&) {
    return finish(FailureReason::EvaluatorError);
  }
}

SurrogateEvaluator::SurrogateEvaluator(const std::string& id) : id_(id) {
  const std::string target_prefix = "target_active_count(";
  if (id == "active_count_ratio") {
    kind_ = Kind::ActiveCountRatio;
  } else if (id == "depth_reward") {
    kind_ = Kind::DepthReward;
  } else if (id.rfind(target_prefix, 0) == 0 && id.size() > target_prefix.size() + 1 &&
             id.back() == ')') {
    const char* first = id.data() + target_prefix.size();
    const char* last = id.data() + id.size() - 1;
    const auto [ptr, ec] = std::from_chars(first, last, target_);
    if (ec != std::errc{} || ptr != last || target_ < 0) throw UnknownSurrogate(id);
    kind_ = Kind::TargetActiveCount;
  } else {
    throw UnknownSurrogate(id);
  }
}

FitnessResult SurrogateEvaluator::evaluate(const Genotype& g, RngStream) const {
  FitnessResult fr;
  const int active = static_cast<int>(active_nodes(g).size());
  switch (kind_) {
    case Kind::ActiveCountRatio:
      fr.fitness = std::min(1.0, static_cast<double>(active) / g.config.max_active);
      break;
    case Kind::TargetActiveCount: {
      const double span = std::max({static_cast<double>(target_ - g.config.min_active),
                                    static_cast<double>(g.config.max_active - target_), 1.0});
      fr.fitness = std::max(0.0, 1.0 - std::abs(active - target_) / span);
      break;
    }
    case Kind::DepthReward: {
      const Catalog cat = Catalog::build(g.config.function_set, g.config.channels);
      const LayerGraph graph = decode(g, cat, 2);
      std::vector<int> dist(graph.nodes.size(), 1);
      for (std::size_t i = 1; i < graph.nodes.size(); ++i) {
        const GraphNode& node = graph.nodes[i];
        int best = dist[static_cast<std::size_t>(node.inputs[0])];
        if (node.inputs[1] >= 0)
          best = std::max(best, dist[static_cast<std::size_t>(node.inputs[1])]);
        dist[i] = 1 + best;
      }
      fr.fitness = std::min(1.0, static_cast<double>(dist.back()) / (g.config.n_cols + 2));
      break;
    }
  }
  return fr;
}

}  // namespace cgpnas

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgpnas/data.hpp"
#include "cgpnas/genotype.hpp"
#include "cgpnas/graph.hpp"
#include "cgpnas/network.hpp"
#include "cgpnas/optimizer.hpp"
#include "cgpnas/rng.hpp"

namespace cgpnas {

struct LrPoint {
  int epoch = 1;  // 1-based; the new rate applies from this epoch on
  double lr = 0.0;

  bool operator==(const LrPoint&) const = default;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double initial_lr = 0.01;
  std::vector<LrPoint> lr_schedule;  // strictly ascending epochs
  int epochs = 50;
  int batch_size = 128;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  bool augmentation = true;
  int fitness_window = 10;

  bool operator==(const TrainConfig&) const = default;
};

// Search phase: Adam at 0.01 for 50 epochs, cut by 10x at epoch 30.
TrainConfig search_defaults();
// Final training: SGD with momentum 0.9 for 500 epochs, weight decay 5e-4,
// lr 0.01, then 0.1 at epoch 5, 0.01 at 250, 0.001 at 375.
TrainConfig retrain_defaults();

// Learning rate for a 1-based epoch; piecewise constant, change points take
// effect at their own epoch.
double lr_at(const TrainConfig& cfg, int epoch);

// Max over the last min(window, size) entries; 0 on an empty trace.
double fitness_from_trace(const std::vector<double>& accuracies, int window);

enum class FailureReason { None, OutOfMemoryBudget, InvalidArchitecture, Diverged, EvaluatorError };

const char* failure_name(FailureReason r);

struct FitnessResult {
  double fitness = 0.0;
  std::vector<double> val_accuracies;  // one per completed epoch
  std::optional<double> test_accuracy;
  std::int64_t param_count = 0;
  int epochs_trained = 0;
  double wall_seconds = 0.0;
  FailureReason reason = FailureReason::None;
};

std::string fitness_json(const FitnessResult& r);

// He-initialized network for a shaped graph; refuses to build when the
// memory estimate at batch_size exceeds budget_bytes (0 = unlimited).
Network<float> build_network(const LayerGraph& shaped, RngStream& rng,
                             std::int64_t budget_bytes = 0, int batch_size = 128);

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  // Same genotype and stream state give the same result; concurrent calls on
  // distinct candidates never interact.
  virtual FitnessResult evaluate(const Genotype& g, RngStream rng) const = 0;
  virtual std::string id() const = 0;
};

struct TrainingLimits {
  std::int64_t memory_budget_bytes = 0;  // 0 = unlimited
};

// Trains each candidate on the train split per TrainConfig and scores it by
// validation accuracy over the trailing fitness window. Candidates that
// cannot train come back with fitness 0 and a reason instead of throwing.
// When a test set is given, the final weights are scored on it as well.
class TrainingEvaluator : public Evaluator {
 public:
  TrainingEvaluator(const Dataset& train, const Dataset& val, TrainConfig cfg,
                    TrainingLimits limits = {}, const Dataset* test = nullptr);

  FitnessResult evaluate(const Genotype& g, RngStream rng) const override;
  std::string id() const override { return "training"; }

 private:
  const Dataset* train_;
  const Dataset* val_;
  const Dataset* test_;
  TrainConfig cfg_;
  TrainingLimits limits_;
};

// Deterministic graph-only stand-ins for evolution tests and demo runs:
//   active_count_ratio      active node count over max_active
//   target_active_count(K)  peaks at 1 when exactly K nodes are active
//   depth_reward            longest input-to-output path, normalized
class SurrogateEvaluator : public Evaluator {
 public:
  explicit SurrogateEvaluator(const std::string& id);  // UnknownSurrogate on a bad id

  FitnessResult evaluate(const Genotype& g, RngStream rng) const override;
  std::string id() const override { return id_; }

 private:
  enum class Kind { ActiveCountRatio, TargetActiveCount, DepthReward };
  Kind kind_;
  int target_ = 0;
  std::string id_;
};

}  // namespace cgpnas

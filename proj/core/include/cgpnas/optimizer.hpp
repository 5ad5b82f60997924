#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cgpnas/layers.hpp"

namespace cgpnas {

enum class OptimizerKind { Adam, SgdMomentum };

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One momentum-SGD update: v <- momentum*v + (g + wd*w); w <- w - lr*v.
template <typename S>
void sgd_momentum_step(std::vector<S>& w, const std::vector<S>& g, std::vector<S>& v, double lr,
                       double momentum, double weight_decay) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = static_cast<double>(g[i]) + weight_decay * static_cast<double>(w[i]);
    const double vi = momentum * static_cast<double>(v[i]) + gi;
    v[i] = static_cast<S>(vi);
    w[i] = static_cast<S>(static_cast<double>(w[i]) - lr * vi);
  }
}

// One bias-corrected Adam update at step t (1-based). Weight decay is the
// additive form, folded into the gradient.
template <typename S>
void adam_step(std::vector<S>& w, const std::vector<S>& g, std::vector<S>& m, std::vector<S>& v,
               std::int64_t t, double lr, double beta1, double beta2, double eps,
               double weight_decay) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = static_cast<double>(g[i]) + weight_decay * static_cast<double>(w[i]);
    const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
    const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
    m[i] = static_cast<S>(mi);
    v[i] = static_cast<S>(vi);
    w[i] = static_cast<S>(static_cast<double>(w[i]) -
                          lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
  }
}

// Applies one of the update rules across a set of parameter slots, owning
// the per-parameter optimizer state.
template <typename S>
class Optimizer {
 public:
  Optimizer(const OptimizerOptions& opt, std::vector<ParamSlot<S>*> slots)
      : opt_(opt), slots_(std::move(slots)) {
    state_a_.resize(slots_.size());
    state_b_.resize(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      state_a_[i].assign(slots_[i]->value.size(), S(0));
      state_b_[i].assign(slots_[i]->value.size(), S(0));
    }
  }

  void set_lr(double lr) { opt_.lr = lr; }
  double lr() const { return opt_.lr; }

  void step() {
    ++t_;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      ParamSlot<S>& p = *slots_[i];
      if (opt_.kind == OptimizerKind::Adam) {
        adam_step(p.value, p.grad, state_a_[i], state_b_[i], t_, opt_.lr, opt_.beta1, opt_.beta2,
                  opt_.eps, opt_.weight_decay);
      } else {
        sgd_momentum_step(p.value, p.grad, state_a_[i], opt_.lr, opt_.momentum,
                          opt_.weight_decay);
      }
    }
  }

 private:
  OptimizerOptions opt_;
  std::vector<ParamSlot<S>*> slots_;
  std::vector<std::vector<S>> state_a_;  // velocity, or Adam first moment
  std::vector<std::vector<S>> state_b_;  // Adam second moment
  std::int64_t t_ = 0;
};

}  // namespace cgpnas

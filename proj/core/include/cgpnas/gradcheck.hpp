#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "cgpnas/network.hpp"

namespace cgpnas {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  int checked = 0;
  std::string worst_param;
};

// Compares analytic gradients against central finite differences of the
// training loss. Coordinates are sampled from every parameter array so a
// dead gradient path cannot hide behind the big convolution kernels.
// Meaningful tolerances need S = double.
template <typename S>
GradCheckReport grad_check(Network<S>& net, const Tensor4<S>& input,
                           const std::vector<int>& labels, int sample_count, double fd_eps,
                           RngStream& rng) {
  auto loss_at = [&]() {
    const Tensor4<S>& logits = net.forward(input, RunMode::Train);
    return softmax_cross_entropy<S>(logits, labels, nullptr);
  };

  // Analytic pass.
  net.zero_grads();
  const Tensor4<S>& logits = net.forward(input, RunMode::Train);
  Tensor4<S> dlogits(logits.batch(), logits.shape3());
  softmax_cross_entropy(logits, labels, &dlogits);
  net.backward(dlogits);

  std::vector<ParamSlot<S>*> slots = net.param_slots();
  std::size_t total = 0;
  for (ParamSlot<S>* p : slots) total += p->value.size();

  GradCheckReport report;
  double sum_rel = 0.0;
  for (ParamSlot<S>* p : slots) {
    // Per-slot share of the sample budget, at least two coordinates.
    std::size_t want = std::max<std::size_t>(
        2, static_cast<std::size_t>(sample_count) * p->value.size() / std::max<std::size_t>(total, 1));
    want = std::min(want, p->value.size());
    std::set<std::size_t> picked;
    while (picked.size() < want) picked.insert(rng.uniform_index(p->value.size()));

    for (std::size_t idx : picked) {
      const S saved = p->value[idx];
      const double h = fd_eps * (1.0 + std::abs(static_cast<double>(saved)));
      p->value[idx] = static_cast<S>(static_cast<double>(saved) + h);
      const double up = loss_at();
      p->value[idx] = static_cast<S>(static_cast<double>(saved) - h);
      const double down = loss_at();
      p->value[idx] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = static_cast<double>(p->grad[idx]);
      // both effectively zero: FD noise over the floored denominator is not a
      // disagreement
      const double rel =
          (std::abs(analytic) < 1e-6 && std::abs(numeric) < 1e-6)
              ? 0.0
              : std::abs(analytic - numeric) /
                    std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      sum_rel += rel;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p->name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  report.mean_rel_error = report.checked ? sum_rel / report.checked : 0.0;
  return report;
}

}  // namespace cgpnas

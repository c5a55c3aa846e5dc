#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "recurrent_octomap/neural/matrix.hpp"

namespace rom {

/// Stochastic gradient descent with per-epoch exponential decay:
/// lr = base * decay^epoch. Momentum is off unless momentum > 0.
struct OptimizerState {
  double base_learning_rate = 0.005;
  double decay = 0.95;
  std::size_t epoch = 0;
  double momentum = 0.0;
  std::vector<Vector> velocity;  // allocated lazily, one per tensor

  double effective_rate() const;
  void next_epoch() { ++epoch; }
};

/// params <- params - lr * grads (or the momentum form). Shapes must match.
void optimizer_step(OptimizerState& opt, std::vector<std::span<double>> params,
                    std::vector<std::span<const double>> grads);

template <class Params>
void optimizer_step(OptimizerState& opt, Params& params, const Params& grads) {
  optimizer_step(opt, params.tensors(), grads.tensors());
}

double global_norm(const std::vector<std::span<const double>>& tensors);

/// Rescales the tensors so their joint L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(std::vector<std::span<double>> tensors, double max_norm);

/// a += scale * b, tensor by tensor.
void add_scaled(std::vector<std::span<double>> a,
                std::vector<std::span<const double>> b, double scale = 1.0);

}  // namespace rom

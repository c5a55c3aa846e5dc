#pragma once

#include <cstddef>
#include <span>

#include "recurrent_octomap/neural/matrix.hpp"

namespace rom {

inline constexpr double kProbabilityFloor = 1e-12;

/// Numerically stable softmax (max-subtracted).
Vector softmax(std::span<const double> logits);

/// -log(max(probs[label], 1e-12)). Throws ArgumentError for a bad label.
double nll_loss(std::span<const double> probs, std::size_t label);

/// Gradient of weight * nll_loss(softmax(logits), label) w.r.t. the logits,
/// given the softmax output: weight * (probs - onehot(label)).
Vector nll_softmax_grad(std::span<const double> probs, std::size_t label,
                        double weight = 1.0);

/// Mean nll over a batch of probability rows.
double mean_nll_loss(const Matrix& probs, std::span<const std::size_t> labels);

}  // namespace rom

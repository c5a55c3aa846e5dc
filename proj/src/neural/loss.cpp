#include "recurrent_octomap/neural/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - m);
  // Summing in ascending order makes the normalizer independent of the input
  // order, so softmax commutes exactly with permutations.
  Vector sorted = out;
  std::sort(sorted.begin(), sorted.end());
  double z = 0.0;
  for (double v : sorted) z += v;
  for (double& v : out) v /= z;
  return out;
}

double nll_loss(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw ArgumentError("nll_loss: label " + std::to_string(label) +
                        " out of range for " + std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

Vector nll_softmax_grad(std::span<const double> probs, std::size_t label,
                        double weight) {
  if (label >= probs.size()) {
    throw ArgumentError("nll_softmax_grad: label " + std::to_string(label) +
                        " out of range");
  }
  Vector g(probs.begin(), probs.end());
  g[label] -= 1.0;
  for (double& v : g) v *= weight;
  return g;
}

double mean_nll_loss(const Matrix& probs, std::span<const std::size_t> labels) {
  if (labels.size() != probs.rows()) {
    throw ArgumentError("mean_nll_loss: label count does not match rows");
  }
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < probs.rows(); ++n) total += nll_loss(probs.row(n), labels[n]);
  return total / static_cast<double>(labels.size());
}

}  // namespace rom

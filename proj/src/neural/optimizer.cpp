#include "recurrent_octomap/neural/optimizer.hpp"

#include <cmath>
#include <string>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

double OptimizerState::effective_rate() const {
  return base_learning_rate * std::pow(decay, static_cast<double>(epoch));
}

void optimizer_step(OptimizerState& opt, std::vector<std::span<double>> params,
                    std::vector<std::span<const double>> grads) {
  if (params.size() != grads.size()) {
    throw ArgumentError("optimizer_step: " + std::to_string(params.size()) +
                        " parameter tensors but " + std::to_string(grads.size()) +
                        " gradient tensors");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size()) {
      throw ArgumentError("optimizer_step: tensor " + std::to_string(t) +
                          " shape mismatch");
    }
  }
  const double lr = opt.effective_rate();
  if (opt.momentum <= 0.0) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t].size(); ++i) params[t][i] -= lr * grads[t][i];
    }
    return;
  }
  if (opt.velocity.size() != params.size()) {
    opt.velocity.clear();
    for (const auto& p : params) opt.velocity.emplace_back(p.size(), 0.0);
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& v = opt.velocity[t];
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      v[i] = opt.momentum * v[i] + grads[t][i];
      params[t][i] -= lr * v[i];
    }
  }
}

double global_norm(const std::vector<std::span<const double>>& tensors) {
  double sq = 0.0;
  for (const auto& t : tensors) {
    for (double v : t) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(std::vector<std::span<double>> tensors, double max_norm) {
  double sq = 0.0;
  for (const auto& t : tensors) {
    for (double v : t) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& t : tensors) {
      for (double& v : t) v *= s;
    }
  }
  return norm;
}

void add_scaled(std::vector<std::span<double>> a,
                std::vector<std::span<const double>> b, double scale) {
  if (a.size() != b.size()) throw ArgumentError("add_scaled: tensor count mismatch");
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw ArgumentError("add_scaled: shape mismatch");
    for (std::size_t i = 0; i < a[t].size(); ++i) a[t][i] += scale * b[t][i];
  }
}

}  // namespace rom

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/neural/activation.hpp"
#include "recurrent_octomap/neural/matrix.hpp"

namespace rom {

/// One fully connected layer. weight is (out x in); bias has `out` entries.
struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::kRelu;

  bool operator==(const DenseLayer&) const = default;
};

/// Chain of dense layers applied row-wise to a batch.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;

  /// Throws ConfigError unless consecutive layer dimensions chain.
  void validate() const;

  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const MlpParams&) const = default;
};

/// Hidden layers use `hidden`, the last layer uses `last`. Weights are drawn
/// uniform in +-1/sqrt(fan_in); biases start at zero.
MlpParams make_mlp(std::size_t input_dim, std::span<const std::size_t> widths,
                   Activation hidden, Activation last, Rng& rng);

/// Same shapes, every value zero. Used as a gradient accumulator.
MlpParams zeros_like(const MlpParams& params);

/// activations[0] is the input, activations[k + 1] the output of layer k.
struct MlpCache {
  std::vector<Matrix> activations;
};

/// Applies the network to every row of `input` (N x input_dim).
Matrix mlp_forward(const MlpParams& params, const Matrix& input,
                   MlpCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns dL/d(input).
/// `grad_output` is N x output_dim.
Matrix mlp_backward(const MlpParams& params, const MlpCache& cache,
                    const Matrix& grad_output, MlpParams& grads);

}  // namespace rom

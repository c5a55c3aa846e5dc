#include "recurrent_octomap/neural/mlp.hpp"

#include <cmath>
#include <string>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t MlpParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

void MlpParams::validate() const {
  if (layers.empty()) throw ConfigError("MLP has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ConfigError("MLP layer " + std::to_string(k) + ": bias has " +
                        std::to_string(layer.bias.size()) + " entries, weight has " +
                        std::to_string(layer.weight.rows()) + " rows");
    }
    if (k > 0 && layer.weight.cols() != layers[k - 1].weight.rows()) {
      throw ConfigError("MLP layer " + std::to_string(k) + " expects input dim " +
                        std::to_string(layer.weight.cols()) + " but layer " +
                        std::to_string(k - 1) + " outputs " +
                        std::to_string(layers[k - 1].weight.rows()));
    }
  }
}

std::vector<std::span<double>> MlpParams::tensors() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers) {
    out.emplace_back(layer.weight.values());
    out.emplace_back(layer.bias);
  }
  return out;
}

std::vector<std::span<const double>> MlpParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers) {
    out.emplace_back(layer.weight.values());
    out.emplace_back(layer.bias);
  }
  return out;
}

MlpParams make_mlp(std::size_t input_dim, std::span<const std::size_t> widths,
                   Activation hidden, Activation last, Rng& rng) {
  if (widths.empty()) throw ConfigError("make_mlp: no layer widths");
  MlpParams params;
  std::size_t fan_in = input_dim;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    DenseLayer layer;
    layer.weight = Matrix(widths[k], fan_in);
    layer.bias.assign(widths[k], 0.0);
    layer.activation = k + 1 == widths.size() ? last : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
    fan_in = widths[k];
  }
  return params;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams out = params;
  for (auto& layer : out.layers) {
    layer.weight.fill(0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return out;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpCache* cache) {
  params.validate();
  if (input.cols() != params.input_dim()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(input.cols()) +
                      " columns, network expects " + std::to_string(params.input_dim()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  Matrix current = input;
  for (const auto& layer : params.layers) {
    Matrix next(current.rows(), layer.weight.rows());
    for (std::size_t n = 0; n < current.rows(); ++n) {
      auto out = next.row(n);
      gemv(layer.weight, current.row(n), out);
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double z = out[j] + layer.bias[j];
        out[j] = layer.activation == Activation::kRelu ? (z > 0.0 ? z : 0.0) : z;
      }
    }
    if (cache) cache->activations.push_back(next);
    current = std::move(next);
  }
  return current;
}

Matrix mlp_backward(const MlpParams& params, const MlpCache& cache,
                    const Matrix& grad_output, MlpParams& grads) {
  if (cache.activations.size() != params.layers.size() + 1) {
    throw InternalError("mlp_backward: forward cache missing or stale");
  }
  Matrix grad = grad_output;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& layer = params.layers[k];
    auto& glayer = grads.layers[k];
    const Matrix& out = cache.activations[k + 1];
    const Matrix& in = cache.activations[k];
    if (layer.activation == Activation::kRelu) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (out.values()[i] <= 0.0) grad.values()[i] = 0.0;
      }
    }
    Matrix grad_in(in.rows(), in.cols());
    for (std::size_t n = 0; n < in.rows(); ++n) {
      const auto g = grad.row(n);
      outer_add(glayer.weight, g, in.row(n));
      for (std::size_t j = 0; j < g.size(); ++j) glayer.bias[j] += g[j];
      gemv_transposed_add(layer.weight, g, grad_in.row(n));
    }
    grad = std::move(grad_in);
  }
  return grad;
}

}  // namespace rom

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/neural/matrix.hpp"

namespace rom {

/// Gate blocks are stacked in this order inside every 4H-row weight.
enum class Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

std::string_view to_string(Gate g);

struct LstmLayer {
  Matrix input_weight;      // 4H x layer input dim
  Matrix recurrent_weight;  // 4H x H
  Vector bias;              // 4H

  bool operator==(const LstmLayer&) const = default;
};

/// Stacked LSTM plus the linear decoder that maps the top hidden vector to
/// class logits. One instance is shared by every cell of a map.
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t class_count = 0;
  std::vector<LstmLayer> layers;
  Matrix decoder_weight;  // class_count x H
  Vector decoder_bias;    // class_count

  std::size_t num_layers() const { return layers.size(); }
  void validate() const;

  /// Every trainable tensor in a fixed order (layer by layer: input weight,
  /// recurrent weight, bias; then decoder weight, decoder bias).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const LstmParams&) const = default;
};

/// Uniform +-1/sqrt(fan_in) weights, zero biases except the forget gate (1.0).
LstmParams make_lstm(std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t num_layers, std::size_t class_count, Rng& rng);

LstmParams zeros_like(const LstmParams& params);

/// Recurrent state (S, h) for every layer.
struct LstmState {
  std::vector<Vector> cell;
  std::vector<Vector> hidden;

  static LstmState zeros(std::size_t num_layers, std::size_t hidden_dim);
  static LstmState zeros(const LstmParams& params) {
    return zeros(params.num_layers(), params.hidden_dim);
  }

  /// Sets every entry to zero, keeping the shapes.
  void reset();
  bool is_zero() const;

  bool operator==(const LstmState&) const = default;
};

struct LstmLayerCache {
  Vector input;        // layer input (x for layer 0, h of the layer below otherwise)
  Vector prev_cell;
  Vector prev_hidden;
  Vector gates;        // 4H post-activation values
  Vector tanh_cell;    // tanh(S) of the new cell state
};

struct LstmStepCache {
  std::vector<LstmLayerCache> layers;
};

/// One recurrent step through all layers. Throws NumericError naming the
/// gate and layer if any activation is not finite.
LstmState lstm_step(const LstmParams& params, std::span<const double> x,
                    const LstmState& prev, LstmStepCache* cache = nullptr);

/// W_e h + b_e for the top-layer hidden vector.
Vector decode_logits(const LstmParams& params, std::span<const double> hidden_top);

/// Cached forward pass over one sequence segment.
struct SequenceTrace {
  std::vector<LstmStepCache> steps;
  std::vector<bool> reset_before;  // state entering step t was reinitialized
  std::vector<Vector> logits;
  std::vector<Vector> probs;

  std::size_t length() const { return steps.size(); }
};

/// Runs the sequence from `initial` (zeros when null). When reset_before[t] is
/// set the incoming state of step t is replaced by zeros. reset_before may be
/// empty (no resets).
SequenceTrace forward_sequence(const LstmParams& params, std::span<const Vector> inputs,
                               const std::vector<bool>& reset_before = {},
                               const LstmState* initial = nullptr);

/// Truncated backpropagation through time.
///
/// The trace is cut into windows of `truncation` steps starting at step 0;
/// gradient never crosses a window boundary or a reset, so the loss at step
/// t reaches at most `truncation` steps back. logit_grads[t] is dL/dlogits at
/// step t; an empty vector means no loss at that step. Optionally returns
/// dL/dx for every step.
LstmParams bptt_backward(const LstmParams& params, const SequenceTrace& trace,
                         std::span<const Vector> logit_grads, std::size_t truncation,
                         std::vector<Vector>* input_grads = nullptr);

}  // namespace rom

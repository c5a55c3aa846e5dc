#include "recurrent_octomap/neural/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/neural/activation.hpp"
#include "recurrent_octomap/neural/loss.hpp"

namespace rom {
namespace {

constexpr std::size_t kGateCount = 4;

void require_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw ConfigError(what + ": expected dimension " + std::to_string(want) + ", got " +
                      std::to_string(got));
  }
}

}  // namespace

std::string_view to_string(Gate g) {
  switch (g) {
    case Gate::kInput:
      return "input";
    case Gate::kForget:
      return "forget";
    case Gate::kOutput:
      return "output";
    case Gate::kCandidate:
      return "candidate";
  }
  return "unknown";
}

void LstmParams::validate() const {
  if (layers.empty()) throw ConfigError("LSTM has no layers");
  const std::size_t rows = kGateCount * hidden_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    const std::string name = "LSTM layer " + std::to_string(l);
    require_dim(layer.input_weight.rows(), rows, name + " input weight rows");
    require_dim(layer.input_weight.cols(), in, name + " input weight cols");
    require_dim(layer.recurrent_weight.rows(), rows, name + " recurrent weight rows");
    require_dim(layer.recurrent_weight.cols(), hidden_dim, name + " recurrent weight cols");
    require_dim(layer.bias.size(), rows, name + " bias");
  }
  require_dim(decoder_weight.rows(), class_count, "decoder weight rows");
  require_dim(decoder_weight.cols(), hidden_dim, "decoder weight cols");
  require_dim(decoder_bias.size(), class_count, "decoder bias");
}

std::vector<std::span<double>> LstmParams::tensors() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers) {
    out.emplace_back(layer.input_weight.values());
    out.emplace_back(layer.recurrent_weight.values());
    out.emplace_back(layer.bias);
  }
  out.emplace_back(decoder_weight.values());
  out.emplace_back(decoder_bias);
  return out;
}

std::vector<std::span<const double>> LstmParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers) {
    out.emplace_back(layer.input_weight.values());
    out.emplace_back(layer.recurrent_weight.values());
    out.emplace_back(layer.bias);
  }
  out.emplace_back(decoder_weight.values());
  out.emplace_back(decoder_bias);
  return out;
}

LstmParams make_lstm(std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t num_layers, std::size_t class_count, Rng& rng) {
  if (input_dim == 0 || hidden_dim == 0 || num_layers == 0 || class_count == 0) {
    throw ConfigError("make_lstm: all dimensions must be positive");
  }
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.class_count = class_count;
  auto init = [&rng](Matrix& m, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : m.values()) w = rng.uniform(-bound, bound);
  };
  for (std::size_t l = 0; l < num_layers; ++l) {
    LstmLayer layer;
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    layer.input_weight = Matrix(kGateCount * hidden_dim, in);
    layer.recurrent_weight = Matrix(kGateCount * hidden_dim, hidden_dim);
    // Fan-in of each gate pre-activation covers both input and recurrent terms.
    init(layer.input_weight, in + hidden_dim);
    init(layer.recurrent_weight, in + hidden_dim);
    layer.bias.assign(kGateCount * hidden_dim, 0.0);
    const std::size_t forget = static_cast<std::size_t>(Gate::kForget) * hidden_dim;
    std::fill_n(layer.bias.begin() + static_cast<std::ptrdiff_t>(forget), hidden_dim, 1.0);
    p.layers.push_back(std::move(layer));
  }
  p.decoder_weight = Matrix(class_count, hidden_dim);
  init(p.decoder_weight, hidden_dim);
  p.decoder_bias.assign(class_count, 0.0);
  return p;
}

LstmParams zeros_like(const LstmParams& params) {
  LstmParams out = params;
  for (auto t : out.tensors()) std::fill(t.begin(), t.end(), 0.0);
  return out;
}

LstmState LstmState::zeros(std::size_t num_layers, std::size_t hidden_dim) {
  LstmState s;
  s.cell.assign(num_layers, Vector(hidden_dim, 0.0));
  s.hidden.assign(num_layers, Vector(hidden_dim, 0.0));
  return s;
}

void LstmState::reset() {
  for (auto& v : cell) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : hidden) std::fill(v.begin(), v.end(), 0.0);
}

bool LstmState::is_zero() const {
  auto zero = [](const Vector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  return std::all_of(cell.begin(), cell.end(), zero) &&
         std::all_of(hidden.begin(), hidden.end(), zero);
}

LstmState lstm_step(const LstmParams& params, std::span<const double> x,
                    const LstmState& prev, LstmStepCache* cache) {
  const std::size_t hd = params.hidden_dim;
  const std::size_t nl = params.num_layers();
  require_dim(x.size(), params.input_dim, "lstm_step input");
  require_dim(prev.cell.size(), nl, "lstm_step state layers");
  require_dim(prev.hidden.size(), nl, "lstm_step hidden layers");

  LstmState next;
  next.cell.resize(nl);
  next.hidden.resize(nl);
  if (cache) cache->layers.resize(nl);

  Vector z(kGateCount * hd);
  std::span<const double> layer_input = x;
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& layer = params.layers[l];
    const Vector& c_prev = prev.cell[l];
    const Vector& h_prev = prev.hidden[l];
    require_dim(c_prev.size(), hd, "lstm_step cell state");
    require_dim(h_prev.size(), hd, "lstm_step hidden state");

    gemv(layer.input_weight, layer_input, z);
    gemv(layer.recurrent_weight, h_prev, z, /*accumulate=*/true);
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double pre = z[k] + layer.bias[k];
      z[k] = k < 3 * hd ? sigmoid(pre) : std::tanh(pre);
    }
    for (std::size_t g = 0; g < kGateCount; ++g) {
      if (!all_finite(std::span<const double>(z).subspan(g * hd, hd))) {
        throw NumericError("lstm_step: non-finite " +
                           std::string(to_string(static_cast<Gate>(g))) +
                           " gate in layer " + std::to_string(l));
      }
    }

    Vector c(hd), h(hd), tc(hd);
    for (std::size_t j = 0; j < hd; ++j) {
      const double gi = z[j];
      const double gf = z[hd + j];
      const double go = z[2 * hd + j];
      const double cand = z[3 * hd + j];
      c[j] = gf * c_prev[j] + gi * cand;
      tc[j] = std::tanh(c[j]);
      h[j] = go * tc[j];
    }
    if (!all_finite(c)) {
      throw NumericError("lstm_step: non-finite cell state in layer " + std::to_string(l));
    }
    if (cache) {
      auto& lc = cache->layers[l];
      lc.input.assign(layer_input.begin(), layer_input.end());
      lc.prev_cell = c_prev;
      lc.prev_hidden = h_prev;
      lc.gates = z;
      lc.tanh_cell = tc;
    }
    next.cell[l] = std::move(c);
    next.hidden[l] = std::move(h);
    layer_input = next.hidden[l];
  }
  return next;
}

Vector decode_logits(const LstmParams& params, std::span<const double> hidden_top) {
  require_dim(hidden_top.size(), params.hidden_dim, "decoder input");
  Vector logits(params.class_count);
  gemv(params.decoder_weight, hidden_top, logits);
  for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += params.decoder_bias[c];
  return logits;
}

SequenceTrace forward_sequence(const LstmParams& params, std::span<const Vector> inputs,
                               const std::vector<bool>& reset_before,
                               const LstmState* initial) {
  if (!reset_before.empty() && reset_before.size() != inputs.size()) {
    throw ArgumentError("forward_sequence: reset mask length differs from input length");
  }
  SequenceTrace trace;
  trace.steps.resize(inputs.size());
  trace.reset_before.assign(inputs.size(), false);
  trace.logits.reserve(inputs.size());
  trace.probs.reserve(inputs.size());
  LstmState state = initial ? *initial : LstmState::zeros(params);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!reset_before.empty() && reset_before[t]) {
      state.reset();
      trace.reset_before[t] = true;
    }
    state = lstm_step(params, inputs[t], state, &trace.steps[t]);
    trace.logits.push_back(decode_logits(params, state.hidden.back()));
    trace.probs.push_back(softmax(trace.logits.back()));
  }
  return trace;
}

LstmParams bptt_backward(const LstmParams& params, const SequenceTrace& trace,
                         std::span<const Vector> logit_grads, std::size_t truncation,
                         std::vector<Vector>* input_grads) {
  if (truncation == 0) throw ArgumentError("bptt_backward: truncation length must be >= 1");
  const std::size_t steps = trace.length();
  if (logit_grads.size() != steps) {
    throw ArgumentError("bptt_backward: " + std::to_string(logit_grads.size()) +
                        " loss gradients for " + std::to_string(steps) + " steps");
  }
  const std::size_t hd = params.hidden_dim;
  const std::size_t nl = params.num_layers();
  for (const auto& step : trace.steps) {
    if (step.layers.size() != nl) throw InternalError("bptt_backward: missing forward cache");
  }

  LstmParams grads = zeros_like(params);
  if (input_grads) input_grads->assign(steps, Vector(params.input_dim, 0.0));

  // Gradients flowing backward in time, per layer.
  std::vector<Vector> dh_next(nl, Vector(hd, 0.0));
  std::vector<Vector> dc_next(nl, Vector(hd, 0.0));
  Vector dz(kGateCount * hd);

  for (std::size_t t = steps; t-- > 0;) {
    const auto& step = trace.steps[t];
    // dh entering the top layer from the decoder at this step.
    Vector dh_from_above(hd, 0.0);
    const Vector& lg = logit_grads[t];
    if (!lg.empty()) {
      require_dim(lg.size(), params.class_count, "bptt_backward logit gradient");
      const auto& top = trace.steps[t].layers.back();
      // Top-layer h is o * tanh(S), recomputed from the cache.
      Vector h_top(hd);
      for (std::size_t j = 0; j < hd; ++j) h_top[j] = top.gates[2 * hd + j] * top.tanh_cell[j];
      outer_add(grads.decoder_weight, lg, h_top);
      for (std::size_t c = 0; c < lg.size(); ++c) grads.decoder_bias[c] += lg[c];
      gemv_transposed_add(params.decoder_weight, lg, dh_from_above);
    }

    for (std::size_t l = nl; l-- > 0;) {
      const auto& lc = step.layers[l];
      const auto& layer = params.layers[l];
      auto& glayer = grads.layers[l];
      Vector& dh = dh_next[l];
      Vector& dc = dc_next[l];
      for (std::size_t j = 0; j < hd; ++j) dh[j] += dh_from_above[j];

      for (std::size_t j = 0; j < hd; ++j) {
        const double gi = lc.gates[j];
        const double gf = lc.gates[hd + j];
        const double go = lc.gates[2 * hd + j];
        const double cand = lc.gates[3 * hd + j];
        const double tc = lc.tanh_cell[j];
        const double dS = dc[j] + dh[j] * go * (1.0 - tc * tc);
        dz[j] = dS * cand * gi * (1.0 - gi);
        dz[hd + j] = dS * lc.prev_cell[j] * gf * (1.0 - gf);
        dz[2 * hd + j] = dh[j] * tc * go * (1.0 - go);
        dz[3 * hd + j] = dS * gi * (1.0 - cand * cand);
        dc[j] = dS * gf;  // now dL/dS_{t-1}
      }
      outer_add(glayer.input_weight, dz, lc.input);
      outer_add(glayer.recurrent_weight, dz, lc.prev_hidden);
      for (std::size_t k = 0; k < dz.size(); ++k) glayer.bias[k] += dz[k];

      Vector dx(layer.input_weight.cols(), 0.0);
      gemv_transposed_add(layer.input_weight, dz, dx);
      std::fill(dh.begin(), dh.end(), 0.0);
      gemv_transposed_add(layer.recurrent_weight, dz, dh);  // now dL/dh_{t-1}

      if (l > 0) {
        dh_from_above = std::move(dx);
      } else if (input_grads) {
        (*input_grads)[t] = std::move(dx);
      }
    }

    // Cut the flow at window starts and at state reinitializations: the
    // incoming state of step t is then a constant.
    const bool window_start = t % truncation == 0;
    if (window_start || trace.reset_before[t]) {
      for (auto& v : dh_next) std::fill(v.begin(), v.end(), 0.0);
      for (auto& v : dc_next) std::fill(v.begin(), v.end(), 0.0);
    }
  }
  return grads;
}

}  // namespace rom

#include "recurrent_octomap/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/parallel.hpp"
#include "recurrent_octomap/neural/loss.hpp"
#include "recurrent_octomap/neural/weights_io.hpp"

namespace rom {
namespace {

enum : std::uint64_t { kInitStream = 41, kBatchStream = 42 };

std::string cell_name(const CellKey& k) {
  return "(" + std::to_string(k.ix) + "," + std::to_string(k.iy) + "," + std::to_string(k.iz) + ")";
}

}  // namespace

std::size_t SequenceSet::total_steps() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

std::vector<std::size_t> SequenceSet::class_counts() const {
  std::vector<std::size_t> counts(kClassCount, 0);
  for (const auto& s : sequences)
    for (auto l : s.labels) ++counts.at(l);
  return counts;
}

SequenceSet build_sequences(std::vector<LabeledObservation> observations, std::size_t raw_width) {
  for (const auto& o : observations) {
    if (o.raw.size() != raw_width) {
      throw ArgumentError("build_sequences: observation of cell " + cell_name(o.key) + " has width " +
                          std::to_string(o.raw.size()) + ", expected " + std::to_string(raw_width));
    }
  }
  std::vector<std::size_t> order(observations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = observations[a];
    const auto& y = observations[b];
    return x.key != y.key ? x.key < y.key : x.frame < y.frame;
  });
  SequenceSet set;
  set.raw_width = raw_width;
  for (std::size_t n = 0; n < order.size(); ++n) {
    const auto& o = observations[order[n]];
    if (n > 0) {
      const auto& prev = observations[order[n - 1]];
      if (prev.key == o.key && prev.frame == o.frame) {
        throw ArgumentError("build_sequences: cell " + cell_name(o.key) + " observed twice at frame " +
                            std::to_string(o.frame));
      }
    }
    if (!o.label || *o.label == SemanticClass::kDontCare) continue;
    if (set.sequences.empty() || set.sequences.back().key != o.key) {
      set.sequences.push_back({});
      set.sequences.back().key = o.key;
    }
    auto& s = set.sequences.back();
    s.frames.push_back(o.frame);
    s.labels.push_back(static_cast<std::uint8_t>(class_index(*o.label)));
    s.raw.insert(s.raw.end(), o.raw.begin(), o.raw.end());
  }
  return set;
}

SequenceSet collect_sequences(const World& world, std::span<const std::size_t> days,
                              const ObservationSettings& settings) {
  std::vector<LabeledObservation> all;
  for (std::size_t day : days) {
    const std::size_t first = all.size();
    VoxelMap map(settings.map);
    const VoxelMap gt = replay_day(world, day, settings, [&](const ObservedFrame& f) {
      map.prune_expired(f.time);
      for (auto& o : map.insert_scan(f.points, f.raw, nullptr, f.time)) {
        all.push_back({o.key, f.global_frame, std::move(o.feature), std::nullopt});
      }
    });
    for (std::size_t i = first; i < all.size(); ++i) {
      if (const Cell* c = gt.find(all[i].key)) all[i].label = c->gt_label;
    }
  }
  return build_sequences(std::move(all), settings.raw_width());
}

SegmentSampler::SegmentSampler(const SequenceSet& set) : set_(&set) {
  if (set.sequences.empty()) throw ArgumentError("sample_batch: no sequences");
  offsets_.reserve(set.sequences.size() + 1);
  offsets_.push_back(0);
  for (const auto& s : set.sequences) {
    if (s.size() == 0) throw ArgumentError("sample_batch: empty sequence");
    offsets_.push_back(offsets_.back() + s.size());
  }
}

Segment SegmentSampler::draw(Rng& rng, std::size_t cap, bool from_start) const {
  if (cap == 0) throw ArgumentError("sample_batch: cap must be positive");
  Segment seg;
  if (from_start) {
    seg.sequence = rng.below(set_->sequences.size());
    seg.begin = 0;
  } else {
    const std::size_t u = rng.below(offsets_.back());
    seg.sequence = static_cast<std::size_t>(std::upper_bound(offsets_.begin(), offsets_.end(), u) -
                                            offsets_.begin()) - 1;
    seg.begin = u - offsets_[seg.sequence];
  }
  seg.end = std::min(seg.begin + cap, set_->sequences[seg.sequence].size());
  return seg;
}

std::vector<Segment> sample_batch(const SequenceSet& set, std::size_t batch_size, std::size_t cap,
                                  Rng& rng, bool from_start) {
  const SegmentSampler sampler(set);
  std::vector<Segment> out;
  out.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) out.push_back(sampler.draw(rng, cap, from_start));
  return out;
}

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* field) {
    if (!ok) throw ConfigError(std::string("train config: ") + field + " must be positive");
  };
  positive(batch_size > 0, "batch_size");
  positive(hidden_dim > 0, "hidden_dim");
  positive(layers > 0, "layers");
  positive(epochs > 0, "epochs");
  positive(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate");
  positive(truncation > 0, "truncation");
  positive(sequence_cap > 0, "sequence_cap");
  positive(retention_window > 0.0, "retention_window");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("train config: decay must be in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must be in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("train config: clip_norm must be >= 0");
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j{
      {"batch_size", c.batch_size},
      {"hidden_dim", c.hidden_dim},
      {"layers", c.layers},
      {"epochs", c.epochs},
      {"learning_rate", c.learning_rate},
      {"decay", c.decay},
      {"momentum", c.momentum},
      {"truncation", c.truncation},
      {"sequence_cap", c.sequence_cap},
      {"batches_per_epoch", c.batches_per_epoch},
      {"loss_placement", c.loss_placement == LossPlacement::kEveryStep ? "every-step" : "final-step"},
      {"class_weighting", c.class_weighting},
      {"clip_norm", c.clip_norm},
      {"retention_window", c.retention_window},
      {"seed", c.seed},
  };
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  TrainConfig c;
  for (const auto& [name, v] : j.items()) {
    try {
      if (name == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (name == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
      else if (name == "layers") c.layers = v.get<std::size_t>();
      else if (name == "epochs") c.epochs = v.get<std::size_t>();
      else if (name == "learning_rate") c.learning_rate = v.get<double>();
      else if (name == "decay") c.decay = v.get<double>();
      else if (name == "momentum") c.momentum = v.get<double>();
      else if (name == "truncation") c.truncation = v.get<std::size_t>();
      else if (name == "sequence_cap") c.sequence_cap = v.get<std::size_t>();
      else if (name == "batches_per_epoch") c.batches_per_epoch = v.get<std::size_t>();
      else if (name == "class_weighting") c.class_weighting = v.get<bool>();
      else if (name == "clip_norm") c.clip_norm = v.get<double>();
      else if (name == "retention_window") c.retention_window = v.get<double>();
      else if (name == "seed") c.seed = v.get<std::uint64_t>();
      else if (name == "loss_placement") {
        const auto s = v.get<std::string>();
        if (s == "every-step") c.loss_placement = LossPlacement::kEveryStep;
        else if (s == "final-step") c.loss_placement = LossPlacement::kFinalStep;
        else throw ConfigError("train config: loss_placement must be every-step or final-step");
      } else {
        throw ConfigError("train config: unknown field '" + name + "'");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("train config: field '" + name + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

std::vector<std::size_t> sampled_class_counts(const SequenceSet& set, std::size_t cap,
                                              LossPlacement placement) {
  if (cap == 0) throw ArgumentError("sampled_class_counts: cap must be positive");
  std::vector<std::size_t> counts(kClassCount, 0);
  for (const auto& q : set.sequences) {
    const std::size_t n = q.size();
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t starts;
      if (placement == LossPlacement::kEveryStep) {
        starts = std::min(t + 1, cap);
      } else if (t + 1 == n) {
        starts = std::min(n, cap);  // every start whose segment runs to the end
      } else {
        starts = t + 1 >= cap ? 1 : 0;
      }
      counts[q.labels[t]] += starts;
    }
  }
  return counts;
}

std::vector<double> inverse_frequency_weights(std::span<const std::size_t> class_counts) {
  const std::size_t total = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  const auto present = static_cast<double>(
      std::count_if(class_counts.begin(), class_counts.end(), [](std::size_t n) { return n > 0; }));
  std::vector<double> w(class_counts.size(), 0.0);
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (class_counts[c] > 0) w[c] = static_cast<double>(total) / (present * static_cast<double>(class_counts[c]));
  }
  return w;
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".json";
  return p;
}

void save_checkpoint(const std::filesystem::path& model_path, const FusionCheckpoint& ck,
                     const TrainConfig& config) {
  save_lstm(model_path, ck.params);
  nlohmann::ordered_json j;
  j["epoch"] = ck.optimizer.epoch;
  j["learning_rate"] = ck.optimizer.base_learning_rate;
  j["decay"] = ck.optimizer.decay;
  j["momentum"] = ck.optimizer.momentum;
  j["velocity"] = ck.optimizer.velocity;
  j["epoch_loss"] = ck.epoch_loss;
  j["epoch_lr"] = ck.epoch_lr;
  j["train_config"] = nlohmann::ordered_json::parse(train_config_to_json(config));
  const auto side = checkpoint_sidecar(model_path);
  std::ofstream out(side, std::ios::trunc);
  if (!out) throw LoadError("cannot open " + side.string() + " for writing");
  out << j.dump(1) << '\n';
}

FusionCheckpoint load_checkpoint(const std::filesystem::path& model_path) {
  FusionCheckpoint ck;
  ck.params = load_lstm(model_path);
  const auto side = checkpoint_sidecar(model_path);
  std::ifstream in(side);
  if (!in) throw LoadError("missing checkpoint sidecar " + side.string());
  try {
    nlohmann::json j;
    in >> j;
    ck.optimizer.epoch = j.at("epoch").get<std::size_t>();
    ck.optimizer.base_learning_rate = j.at("learning_rate").get<double>();
    ck.optimizer.decay = j.at("decay").get<double>();
    ck.optimizer.momentum = j.at("momentum").get<double>();
    ck.optimizer.velocity = j.at("velocity").get<std::vector<Vector>>();
    ck.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
    ck.epoch_lr = j.at("epoch_lr").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(side.string() + ": " + e.what());
  }
  if (ck.epoch_loss.size() != ck.optimizer.epoch || ck.epoch_lr.size() != ck.optimizer.epoch) {
    throw LoadError(side.string() + ": loss history does not match the epoch counter");
  }
  return ck;
}

SegmentInputs segment_inputs(const SequenceSet& set, const Segment& segment,
                             const ObservationSettings& settings, const TrainConfig& config,
                             double frame_rate) {
  const CellSequence& s = set.sequences.at(segment.sequence);
  if (segment.end > s.size() || segment.begin >= segment.end) throw ArgumentError("segment out of range");
  SegmentInputs in;
  in.inputs.reserve(segment.length());
  for (std::size_t t = segment.begin; t < segment.end; ++t) {
    in.inputs.push_back(settings.expand(s.raw_row(t, set.raw_width), s.key, s.frames[t]).feature);
    const bool reset = t > segment.begin &&
                       static_cast<double>(s.frames[t] - s.frames[t - 1]) / frame_rate > config.retention_window;
    in.reset_before.push_back(reset);
    in.labels.push_back(s.labels[t]);
  }
  return in;
}

SegmentGradient segment_gradient(const LstmParams& params, const SegmentInputs& in,
                                 std::span<const double> class_weights, const TrainConfig& config) {
  const auto trace = forward_sequence(params, in.inputs, in.reset_before);
  const std::size_t n = trace.length();
  std::vector<Vector> logit_grads(n);
  SegmentGradient out;
  const std::size_t first = config.loss_placement == LossPlacement::kFinalStep ? n - 1 : 0;
  for (std::size_t t = first; t < n; ++t) {
    const std::size_t label = in.labels[t];
    const double w = class_weights.empty() ? 1.0 : class_weights[label];
    const double nll = nll_loss(trace.probs[t], label);
    out.plain_loss += nll;
    out.weighted_loss += w * nll;
    ++out.loss_steps;
    logit_grads[t] = nll_softmax_grad(trace.probs[t], label, w);
  }
  out.grads = bptt_backward(params, trace, logit_grads, config.truncation);
  return out;
}

FusionTrainResult train_fusion(const SequenceSet& set, const ObservationSettings& settings,
                               const TrainConfig& config, double frame_rate,
                               const FusionCheckpoint* resume, const TrainHooks& hooks) {
  config.validate();
  settings.validate();
  if (!(frame_rate > 0.0)) throw ConfigError("train_fusion: frame_rate must be positive");
  if (set.sequences.empty()) throw ArgumentError("train_fusion: no training sequences");
  if (set.raw_width != settings.raw_width()) {
    throw ConfigError("train_fusion: sequences were collected with a different observation source");
  }
  const std::size_t input_dim = settings.feature_dim();

  FusionTrainResult result;
  if (resume) {
    const auto& p = resume->params;
    if (p.input_dim != input_dim || p.hidden_dim != config.hidden_dim || p.num_layers() != config.layers ||
        p.class_count != kClassCount) {
      throw ConfigError("train_fusion: checkpoint shape does not match the train config");
    }
    result.params = p;
    result.optimizer = resume->optimizer;
    result.epoch_loss = resume->epoch_loss;
    result.epoch_lr = resume->epoch_lr;
  } else {
    Rng init = Rng::derive(config.seed, kInitStream);
    result.params = make_lstm(input_dim, config.hidden_dim, config.layers, kClassCount, init);
    result.optimizer = OptimizerState{config.learning_rate, config.decay, 0, config.momentum, {}};
  }

  const std::vector<double> weights =
      config.class_weighting
          ? inverse_frequency_weights(sampled_class_counts(set, config.sequence_cap, config.loss_placement))
          : std::vector<double>{};
  const SegmentSampler sampler(set);
  const std::size_t batches = config.batches_per_epoch > 0
                                  ? config.batches_per_epoch
                                  : (set.sequences.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t threads = hooks.threads > 0 ? hooks.threads : default_thread_count();
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  std::vector<SegmentGradient> slots(config.batch_size);
  for (std::size_t epoch = result.optimizer.epoch; epoch < config.epochs; ++epoch) {
    Rng rng = Rng::derive(config.seed, kBatchStream, epoch);
    double plain = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<Segment> segs;
      segs.reserve(config.batch_size);
      for (std::size_t k = 0; k < config.batch_size; ++k) segs.push_back(sampler.draw(rng, config.sequence_cap));
      auto where = [&](std::size_t k) {
        return "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b + 1) + ", sequence " +
               std::to_string(segs[k].sequence) + " (cell " + cell_name(set.sequences[segs[k].sequence].key) +
               ", steps " + std::to_string(segs[k].begin) + ".." + std::to_string(segs[k].end) + ")";
      };
      parallel_for(
          segs.size(),
          [&](std::size_t k) {
            try {
              const auto in = segment_inputs(set, segs[k], settings, config, frame_rate);
              slots[k] = segment_gradient(result.params, in, weights, config);
            } catch (const NumericError& e) {
              throw NumericError("train_fusion: " + std::string(e.what()) + " at " + where(k));
            }
          },
          threads);
      LstmParams total = zeros_like(result.params);
      for (std::size_t k = 0; k < segs.size(); ++k) {
        if (!std::isfinite(slots[k].weighted_loss)) {
          throw NumericError("train_fusion: non-finite loss at " + where(k));
        }
        add_scaled(total.tensors(), std::as_const(slots[k].grads).tensors(), inv_batch);
        plain += slots[k].plain_loss;
        steps += slots[k].loss_steps;
      }
      if (config.clip_norm > 0.0) clip_global_norm(total.tensors(), config.clip_norm);
      optimizer_step(result.optimizer, result.params, total);
    }
    result.epoch_loss.push_back(steps > 0 ? plain / static_cast<double>(steps) : 0.0);
    result.epoch_lr.push_back(result.optimizer.effective_rate());
    result.optimizer.next_epoch();
    if (hooks.on_epoch) hooks.on_epoch(result);
  }
  return result;
}

void write_loss_csv(std::ostream& out, const FusionTrainResult& result) {
  out << "epoch,mean_loss,lr\n";
  char buf[96];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e + 1, result.epoch_loss[e], result.epoch_lr[e]);
    out << buf;
  }
}

}  // namespace rom

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/fusion/fusion.hpp"
#include "recurrent_octomap/neural/lstm.hpp"
#include "recurrent_octomap/neural/optimizer.hpp"
#include "recurrent_octomap/train/pipeline.hpp"

namespace rom {

/// All observations of one cell over the training days, in frame order.
/// raw holds one row of `raw_width` values per step.
struct CellSequence {
  CellKey key;
  std::vector<std::int64_t> frames;
  std::vector<std::uint8_t> labels;  // class index, never DontCare
  std::vector<double> raw;

  std::size_t size() const { return frames.size(); }
  std::span<const double> raw_row(std::size_t t, std::size_t width) const {
    return {raw.data() + t * width, width};
  }
};

struct SequenceSet {
  std::size_t raw_width = 0;
  std::vector<CellSequence> sequences;  // ascending key

  std::size_t total_steps() const;
  /// Steps per class over every sequence.
  std::vector<std::size_t> class_counts() const;
};

/// One cell observation with its ground-truth label (nullopt or DontCare
/// for steps that must not be trained on).
struct LabeledObservation {
  CellKey key;
  std::int64_t frame = 0;
  std::vector<double> raw;
  std::optional<SemanticClass> label;
};

/// Groups observations per cell and orders them by frame, dropping
/// unlabelled and DontCare steps and then cells left empty. Throws
/// ArgumentError when one cell has two observations at the same frame or a
/// raw row has the wrong width.
SequenceSet build_sequences(std::vector<LabeledObservation> observations, std::size_t raw_width);

/// Replays the given days and labels every observation with that day's
/// ground truth.
SequenceSet collect_sequences(const World& world, std::span<const std::size_t> days,
                              const ObservationSettings& settings);

/// A contiguous run [begin, end) of one sequence.
struct Segment {
  std::size_t sequence = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool operator==(const Segment&) const = default;
};

/// Draws segments with (sequence, start) uniform over all steps of all
/// sequences; each runs for at most `cap` steps. With `from_start` the
/// sequence is drawn uniformly and the segment starts at step 0.
class SegmentSampler {
 public:
  explicit SegmentSampler(const SequenceSet& set);
  Segment draw(Rng& rng, std::size_t cap, bool from_start = false) const;

 private:
  const SequenceSet* set_;
  std::vector<std::size_t> offsets_;  // prefix sums of sequence lengths
};

std::vector<Segment> sample_batch(const SequenceSet& set, std::size_t batch_size, std::size_t cap,
                                  Rng& rng, bool from_start = false);

enum class LossPlacement { kEveryStep, kFinalStep };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t hidden_dim = 32;
  std::size_t layers = 2;
  std::size_t epochs = 30;
  double learning_rate = 0.001;
  double decay = 0.95;
  double momentum = 0.0;
  std::size_t truncation = 200;
  std::size_t sequence_cap = 200;
  /// Batches per epoch; 0 means one batch per batch_size sequences.
  std::size_t batches_per_epoch = 0;
  LossPlacement loss_placement = LossPlacement::kEveryStep;
  bool class_weighting = true;
  double clip_norm = 5.0;  // 0 disables clipping
  /// Gaps longer than this reset the state during training, mirroring the
  /// map dropping cells unobserved for longer than its retention window.
  double retention_window = 300.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

/// Inverse-frequency weights normalised to a step-weighted mean of 1;
/// classes without steps get weight 0.
std::vector<double> inverse_frequency_weights(std::span<const std::size_t> class_counts);

/// Loss steps per class as the sampler presents them: each step counted once
/// per start position whose segment puts a loss on it. Steps deep in long
/// sequences fall inside many segments, so raw step counts understate how
/// often long-lived classes are seen.
std::vector<std::size_t> sampled_class_counts(const SequenceSet& set, std::size_t cap, LossPlacement placement);

/// Model plus optimizer progress, enough to continue training bitwise.
struct FusionCheckpoint {
  LstmParams params;
  OptimizerState optimizer;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
};

void save_checkpoint(const std::filesystem::path& model_path, const FusionCheckpoint& checkpoint,
                     const TrainConfig& config);
/// Reads the weights and the JSON sidecar written next to them.
FusionCheckpoint load_checkpoint(const std::filesystem::path& model_path);
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& model_path);

struct FusionTrainResult {
  LstmParams params;
  std::vector<double> epoch_loss;  // mean unweighted nll per loss step
  std::vector<double> epoch_lr;
  OptimizerState optimizer;

  FusionCheckpoint checkpoint() const { return {params, optimizer, epoch_loss, epoch_lr}; }
};

struct TrainHooks {
  /// Called after every epoch with the state reached so far.
  std::function<void(const FusionTrainResult&)> on_epoch;
  std::size_t threads = 0;  // 0: process default
};

/// Expanded (f_cell) inputs of one segment, plus the steps whose incoming
/// state is reset because the gap exceeds the retention window.
struct SegmentInputs {
  std::vector<Vector> inputs;
  std::vector<bool> reset_before;
  std::vector<std::size_t> labels;
};
SegmentInputs segment_inputs(const SequenceSet& set, const Segment& segment,
                             const ObservationSettings& settings, const TrainConfig& config,
                             double frame_rate);

/// Loss and gradient of one segment: the sum over loss steps of
/// weight[label] * nll, with gradients through truncated BPTT.
struct SegmentGradient {
  LstmParams grads;
  double weighted_loss = 0.0;
  double plain_loss = 0.0;  // unweighted nll sum
  std::size_t loss_steps = 0;
};
SegmentGradient segment_gradient(const LstmParams& params, const SegmentInputs& in,
                                 std::span<const double> class_weights, const TrainConfig& config);

/// Mini-batch truncated-BPTT training of the fusion LSTM under NapLSTM with
/// unbounded MNTD. Seed-deterministic, independent of the thread count, and
/// resumable: starting from a checkpoint after k epochs reproduces the rest
/// of an uninterrupted run. Throws NumericError naming the epoch, batch and
/// cell when the loss stops being finite.
FusionTrainResult train_fusion(const SequenceSet& set, const ObservationSettings& settings,
                               const TrainConfig& config, double frame_rate,
                               const FusionCheckpoint* resume = nullptr, const TrainHooks& hooks = {});

/// CSV: epoch,mean_loss,lr
void write_loss_csv(std::ostream& out, const FusionTrainResult& result);

}  // namespace rom

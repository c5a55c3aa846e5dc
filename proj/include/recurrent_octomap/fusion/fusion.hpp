#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recurrent_octomap/map/voxel_map.hpp"
#include "recurrent_octomap/neural/lstm.hpp"

namespace rom {

enum class BackendKind { kBayesian, kStandardLstm, kNapLstm };

std::string_view to_string(BackendKind kind);
/// Accepts "bayes", "lstm", "naplstm". Throws ConfigError otherwise.
BackendKind parse_backend(std::string_view text);

/// Maximum nap time duration, counted in missing observation frames.
struct Mntd {
  enum class Kind { kFrames, kOneDay, kInfinite };
  Kind kind = Kind::kInfinite;
  std::uint64_t frames = 0;

  static Mntd of_frames(std::uint64_t n) { return {Kind::kFrames, n}; }
  static Mntd one_day() { return {Kind::kOneDay, 0}; }
  static Mntd infinite() { return {Kind::kInfinite, 0}; }
  /// Rounds seconds * frame_rate to the nearest frame.
  static Mntd of_seconds(double seconds, double frame_rate);

  /// "inf", "day", an integer frame count, or seconds with an "s" suffix.
  static Mntd parse(std::string_view text, double frame_rate = 10.0);
  std::string to_string() const;

  /// Frame budget, or nullopt when unbounded.
  std::optional<std::uint64_t> resolve(std::uint64_t frames_per_day) const;

  bool operator==(const Mntd&) const = default;
};

/// One fusion strategy shared by every cell of a map. Recurrent variants
/// point at one LstmParams instance; cells never copy weights.
struct FusionBackend {
  BackendKind kind = BackendKind::kBayesian;
  Mntd mntd = Mntd::infinite();
  std::shared_ptr<const LstmParams> params;
  double frame_rate = 10.0;     // Hz, converts timestamps to frames
  double day_period = 86400.0;  // seconds, defines the one-day MNTD

  static FusionBackend bayesian();
  /// Zero-resets on any missing frame; same as NapLSTM with MNTD 0.
  static FusionBackend standard_lstm(std::shared_ptr<const LstmParams> params);
  static FusionBackend nap_lstm(std::shared_ptr<const LstmParams> params, Mntd mntd);

  bool recurrent() const { return kind != BackendKind::kBayesian; }
  /// Effective MNTD (StandardLSTM reports 0 frames).
  Mntd effective_mntd() const;
  std::uint64_t frames_per_day() const;
  /// Whole frames between two timestamps.
  std::int64_t gap_frames(double previous_time, double now) const;
  void validate() const;
};

/// Posterior proportional to prior * likelihood, computed in log space with
/// each factor floored at 1e-12. An empty prior means uniform.
Vector bayes_update(std::span<const double> prior, std::span<const double> likelihood);

/// True when the state survives a gap: gap - 1 <= MNTD. Throws ArgumentError
/// on a negative gap.
bool nap_retains(std::int64_t gap_frames, const Mntd& mntd, std::uint64_t frames_per_day);

/// Zeroes both layers of `state` unless the gap is within MNTD. Returns
/// whether the state was retained.
bool nap_gate(LstmState& state, std::int64_t gap_frames, const Mntd& mntd,
              std::uint64_t frames_per_day);

/// Advances the cell state by one LSTM step on f_cell and decodes prob.
/// Throws ConfigError on a feature width mismatch.
void recurrent_update(Cell& cell, std::span<const double> f_cell, const LstmParams& params);

/// Applies one scan's observations to their cells (cells must already hold
/// the observation, as after VoxelMap::insert_scan). Cells are independent,
/// so the work is split across `threads` workers.
void fuse_observations(VoxelMap& map, std::span<const CellObservation> observations,
                       const FusionBackend& backend, std::size_t threads = 1);

/// A single cell observation. The payload is the class likelihood for the
/// Bayesian backend and f_cell for the recurrent ones.
struct ObservationEvent {
  CellKey key;
  std::int64_t frame = 0;
  double time = 0.0;
  Vector payload;
};

/// Fuses one cell's time-ordered events and returns prob after every event.
/// Throws ArgumentError when frames decrease or keys differ.
std::vector<Vector> fuse_stream(std::span<const ObservationEvent> events,
                                const FusionBackend& backend);

struct ProbRecord {
  CellKey key;
  std::int64_t frame = 0;
  Vector prob;
};

/// CSV with header cell_ix,cell_iy,cell_iz,frame,prob_0..prob_{n-1},argmax.
void write_prob_history(std::ostream& out, std::span<const ProbRecord> records);

}  // namespace rom

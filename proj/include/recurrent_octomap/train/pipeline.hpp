#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "recurrent_octomap/map/voxel_map.hpp"
#include "recurrent_octomap/perception/object_classifier.hpp"
#include "recurrent_octomap/sim/noise.hpp"
#include "recurrent_octomap/sim/world.hpp"

namespace rom {

/// Where per-point semantic observations come from.
///   kNoise:      true object classes corrupted by the confusion matrix and
///                replaced by class prototypes (the default experiments)
///   kPerception: the trained single-scan network run on every scan
enum class ObservationSource { kNoise, kPerception };

std::string_view to_string(ObservationSource s);
ObservationSource parse_observation_source(std::string_view text);

/// Everything needed to turn a rendered scan into cell observations.
///
/// Observations are kept in a compact "raw" form per cell and frame: the
/// fraction of the cell's points reported as each class (noise source) or
/// the mean of [object feature | class probabilities] (perception source).
/// expand() turns a raw row into the f_cell and likelihood the fusion
/// backends consume.
struct ObservationSettings {
  ObservationSource source = ObservationSource::kNoise;
  std::uint64_t seed = 1;
  ConfusionRows confusion = default_confusion();
  double dropout = 0.3;
  double feature_jitter = 0.1;
  std::shared_ptr<const ClassPrototypes> prototypes;
  std::shared_ptr<const PerceptionModel> perception;
  ClusterConfig clustering;
  MapConfig map;

  static ObservationSettings noise(const ScenarioConfig& scenario,
                                   std::shared_ptr<const ClassPrototypes> prototypes);
  static ObservationSettings from_perception(const ScenarioConfig& scenario,
                                             std::shared_ptr<const PerceptionModel> model);

  std::size_t raw_width() const;
  std::size_t feature_dim() const;
  void validate() const;

  /// raw row -> (f_cell, likelihood); the jitter is keyed by cell and frame
  /// so every replay of the same observation expands identically.
  ExpandedPayload expand(std::span<const double> raw, const CellKey& key,
                         std::int64_t global_frame) const;
};

/// One frame of a replayed day after dropout: map-frame points that survive
/// and their raw observation rows.
struct ObservedFrame {
  std::size_t day = 0;
  std::size_t frame = 0;
  std::int64_t global_frame = 0;  // frame count since the start of day 0
  double time = 0.0;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> points;
  Matrix raw;

  /// insert_scan into `map` and expand every returned observation in place.
  /// The map's cells keep the expanded f_cell.
  std::vector<CellObservation> insert_into(VoxelMap& map, const ObservationSettings& settings) const;
};

/// Renders every frame of `day`, produces observations, applies per-cell
/// dropout and calls `on_frame` in frame order. Returns the day's ground
/// truth, accumulated from the same rendered scans before dropout.
VoxelMap replay_day(const World& world, std::size_t day, const ObservationSettings& settings,
                    const std::function<void(const ObservedFrame&)>& on_frame);

/// Per-point raw observation rows for one scan (before dropout). `day` and
/// `frame` key the noise stream.
Matrix observe_scan(const PointCloudScan& scan, const ObservationSettings& settings,
                    std::size_t day, std::size_t frame);

/// Frame index of `time` on the global frame clock.
std::int64_t global_frame_index(const ScenarioConfig& config, std::size_t day, std::size_t frame);

}  // namespace rom

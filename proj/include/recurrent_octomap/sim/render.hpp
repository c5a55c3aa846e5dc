#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/map/voxel_map.hpp"
#include "recurrent_octomap/perception/scan.hpp"
#include "recurrent_octomap/sim/world.hpp"

namespace rom {

struct RenderParams {
  double max_range = 25.0;
  double min_range = 1.0;
  double spacing = 0.25;       // surface sample pitch at zero range
  double spacing_gain = 0.008;  // added pitch per meter of range
  std::size_t budget = 2000;
  double noise_sigma = 0.02;

  static RenderParams from(const ScenarioConfig& config);
};

/// World-frame samples with the generating object of each point.
struct SurfaceSamples {
  std::vector<Eigen::Vector3d> points;
  std::vector<SemanticClass> labels;
  std::vector<std::uint32_t> object_ids;
};

/// Regular grids on every face (except the bottom) that faces the sensor,
/// pitch growing with range, then the range filter. When the budget would be
/// exceeded the pitch is widened uniformly until it fits. Gaussian noise is
/// added last.
SurfaceSamples sample_surfaces(std::span<const SceneBox> boxes, const Eigen::Vector3d& sensor,
                               const RenderParams& params, Rng& rng);

/// Scan at one frame of one day: points in the sensor frame, exact pose,
/// per-point true labels. The noise stream is derived from (seed, day, frame).
PointCloudScan render_scan(const World& world, std::size_t day, std::size_t frame);

/// Per-day label raster: every cell that received a rendered point is
/// labelled with the class of its points, DontCare when two or more classes
/// landed in it during the day.
class GroundTruthAccumulator {
 public:
  explicit GroundTruthAccumulator(double resolution = 0.4);
  void add(std::span<const Eigen::Vector3d> map_points, std::span<const SemanticClass> labels);
  VoxelMap finish() const;

 private:
  VoxelMap keyer_;
  std::unordered_map<CellKey, std::uint8_t, CellKeyHash> masks_;
};

VoxelMap build_ground_truth(const World& world, std::size_t day, double resolution = 0.4);

/// Labelled single-object-per-cluster scans for perception training: a few
/// cars, pedestrians, cyclists and background pieces (wall stretches,
/// planters, posts) at random positions and headings around a sensor at the
/// origin, rendered with the same sampler as the parking lot.
std::vector<PointCloudScan> generate_shapes_corpus(std::uint64_t seed, std::size_t count,
                                                   const RenderParams& params = {},
                                                   double sensor_height = 1.8);

}  // namespace rom

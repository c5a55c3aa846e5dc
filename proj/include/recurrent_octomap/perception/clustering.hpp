#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "recurrent_octomap/perception/scan.hpp"

namespace rom {

/// Range-adaptive single-linkage clustering parameters. Two points link when
/// their distance is at most base_threshold + range_gain * r, with r the
/// larger of the two ranges from the sensor.
struct ClusterConfig {
  double base_threshold = 0.3;
  double range_gain = 0.01;
  std::size_t min_points = 5;

  void validate() const;
};

/// Axis-aligned bounds around one cluster.
struct ObjectnessBox {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
  std::vector<std::size_t> members;  // ascending point indices

  std::size_t point_count() const { return members.size(); }
  bool contains(const Eigen::Vector3d& p) const;
};

double linkage_threshold(const ClusterConfig& config, double range);
bool points_linked(const ClusterConfig& config, const Eigen::Vector3d& a,
                   const Eigen::Vector3d& b);

/// Tight bounds over the given members of `points`.
ObjectnessBox make_box(std::span<const Eigen::Vector3d> points, std::vector<std::size_t> members);

/// Model-free objectness: partitions the scan into linked clusters, drops
/// clusters smaller than min_points, and returns boxes ordered by their
/// smallest member index.
std::vector<ObjectnessBox> cluster_objectness(const PointCloudScan& scan,
                                              const ClusterConfig& config = {});

/// Indices of points that belong to no returned box, ascending.
std::vector<std::size_t> unclustered_points(std::size_t point_count,
                                            std::span<const ObjectnessBox> boxes);

/// Majority vote over member labels; ties resolve to Background when it is
/// among the tied classes, otherwise to the lowest class index.
SemanticClass majority_label(std::span<const SemanticClass> labels,
                             std::span<const std::size_t> members);

}  // namespace rom

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "recurrent_octomap/perception/scan.hpp"
#include "recurrent_octomap/sim/scenario.hpp"

namespace rom {

/// Upright box standing on z_min, rotated by yaw about z. length runs along
/// the local x axis, width along local y.
struct SceneBox {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double yaw = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double z_min = 0.0;
  SemanticClass cls = SemanticClass::kBackground;
  std::uint32_t id = 0;

  bool contains(const Eigen::Vector3d& p, double tolerance = 1e-9) const;
  bool operator==(const SceneBox&) const = default;
};

struct Waypoint {
  double t = 0.0;  // seconds since the start of the day
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  bool operator==(const Waypoint&) const = default;
};

/// Moving pedestrian or cyclist on a piecewise-linear trajectory.
struct Agent {
  SemanticClass cls = SemanticClass::kPedestrian;
  double length = 0.5;
  double width = 0.5;
  double height = 1.7;
  std::uint32_t id = 0;
  std::vector<Waypoint> path;  // increasing t

  /// The agent's box at time t, or nothing outside its active span.
  std::optional<SceneBox> at(double t) const;
  bool operator==(const Agent&) const = default;
};

struct DayPlan {
  std::vector<bool> occupancy;        // per car slot
  std::vector<SceneBox> parked_cars;  // the occupied slots
  std::vector<Agent> agents;
  bool operator==(const DayPlan&) const = default;
};

struct World {
  ScenarioConfig config;
  std::vector<SceneBox> background;
  std::vector<Eigen::Vector2d> car_slots;  // slot centres
  std::vector<DayPlan> days;

  /// Sensor pose at a frame of a day: a fixed rectangular loop each day.
  Pose sensor_pose(std::size_t frame) const;
  /// Every box present at that frame.
  std::vector<SceneBox> objects_at(std::size_t day, std::size_t frame) const;
  /// Loop speed in m/s.
  double robot_speed() const;

  bool operator==(const World&) const = default;
};

/// Deterministic in (config). Throws ArgumentError for a non-positive
/// extent and ConfigError for other invalid fields.
World generate_world(const ScenarioConfig& config);

}  // namespace rom

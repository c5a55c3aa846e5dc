#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rom {

using ConfusionRows = std::array<std::array<double, 4>, 4>;

/// Default class confusion used for noise injection (rows: true class,
/// columns: observed class, order background/car/pedestrian/cyclist).
ConfusionRows default_confusion();
ConfusionRows identity_confusion();

/// Everything that determines a synthetic multi-day parking-lot dataset.
struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::size_t days = 14;
  std::size_t frames_per_day = 600;
  double frame_rate = 10.0;     // Hz
  double day_period = 86400.0;  // seconds between the starts of consecutive days

  double extent_x = 60.0;  // meters
  double extent_y = 40.0;
  double sensor_range = 25.0;
  double sensor_min_range = 1.0;
  double sensor_height = 1.8;
  double robot_margin = 4.0;  // loop distance from the lot boundary

  std::size_t car_slots_per_row = 20;  // two rows
  double car_presence = 0.6;           // per slot and day, unless scheduled
  /// Optional explicit occupancy, car_schedule[day][slot] (slot < 2 * per_row).
  std::optional<std::vector<std::vector<bool>>> car_schedule;

  double pedestrian_rate = 8.0;  // expected walkers per day
  double cyclist_rate = 4.0;
  double pedestrian_speed_min = 1.0;  // m/s
  double pedestrian_speed_max = 1.6;
  double cyclist_speed_min = 3.0;
  double cyclist_speed_max = 5.0;
  double crossing_fraction = 0.3;  // pedestrians crossing the car rows

  double point_spacing = 0.25;   // surface sample spacing at the sensor (m)
  double spacing_gain = 0.008;   // extra spacing per meter of range
  std::size_t point_budget = 2000;
  double noise_sigma = 0.02;     // meters

  double dropout = 0.3;  // per cell and frame
  ConfusionRows confusion = default_confusion();
  double feature_jitter = 0.1;  // std-dev of prototype jitter

  /// Throws ConfigError naming the offending field.
  void validate() const;

  double day_duration() const { return static_cast<double>(frames_per_day) / frame_rate; }
  double frame_time(std::size_t day, std::size_t frame) const {
    return static_cast<double>(day) * day_period + static_cast<double>(frame) / frame_rate;
  }
  std::size_t car_slot_count() const { return 2 * car_slots_per_row; }

  bool operator==(const ScenarioConfig&) const = default;
};

std::string scenario_to_json(const ScenarioConfig& config);
/// Missing fields keep their defaults; unknown fields are rejected.
ScenarioConfig scenario_from_json(const std::string& text);
void save_scenario(const std::filesystem::path& path, const ScenarioConfig& config);
ScenarioConfig load_scenario(const std::filesystem::path& path);

}  // namespace rom

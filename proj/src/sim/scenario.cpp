#include "recurrent_octomap/sim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

ConfusionRows default_confusion() {
  // Cars are mostly reported as background and cyclists mostly as
  // pedestrians, so per-observation majority voting is wrong for them.
  return {{{0.85, 0.05, 0.05, 0.05},
           {0.55, 0.40, 0.00, 0.05},
           {0.10, 0.00, 0.75, 0.15},
           {0.10, 0.00, 0.50, 0.40}}};
}

ConfusionRows identity_confusion() {
  ConfusionRows c{};
  for (std::size_t i = 0; i < 4; ++i) c[i][i] = 1.0;
  return c;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("scenario field '" + field + "': " + why);
  };
  auto positive = [&](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(field, "must be positive");
  };
  auto probability = [&](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) fail(field, "must be a probability in [0, 1]");
  };
  auto non_negative = [&](double v, const char* field) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(field, "must be >= 0");
  };
  if (days == 0) fail("days", "must be at least 1");
  if (frames_per_day == 0) fail("frames_per_day", "must be at least 1");
  positive(frame_rate, "frame_rate");
  positive(day_period, "day_period");
  if (day_period < day_duration()) fail("day_period", "shorter than one day of frames");
  positive(extent_x, "extent_x");
  positive(extent_y, "extent_y");
  positive(sensor_range, "sensor_range");
  non_negative(sensor_min_range, "sensor_min_range");
  non_negative(sensor_height, "sensor_height");
  non_negative(robot_margin, "robot_margin");
  if (2 * robot_margin >= std::min(extent_x, extent_y)) fail("robot_margin", "leaves no room for the loop");
  probability(car_presence, "car_presence");
  if (car_schedule) {
    if (car_schedule->size() < days) fail("car_schedule", "needs one row per day");
    for (const auto& row : *car_schedule)
      if (row.size() != car_slot_count()) fail("car_schedule", "needs one entry per car slot");
  }
  non_negative(pedestrian_rate, "pedestrian_rate");
  non_negative(cyclist_rate, "cyclist_rate");
  positive(pedestrian_speed_min, "pedestrian_speed_min");
  positive(cyclist_speed_min, "cyclist_speed_min");
  if (pedestrian_speed_max < pedestrian_speed_min) fail("pedestrian_speed_max", "below the minimum");
  if (cyclist_speed_max < cyclist_speed_min) fail("cyclist_speed_max", "below the minimum");
  probability(crossing_fraction, "crossing_fraction");
  positive(point_spacing, "point_spacing");
  non_negative(spacing_gain, "spacing_gain");
  if (point_budget == 0) fail("point_budget", "must be at least 1");
  non_negative(noise_sigma, "noise_sigma");
  probability(dropout, "dropout");
  non_negative(feature_jitter, "feature_jitter");
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (double v : confusion[i]) {
      if (!(v >= 0.0)) fail("confusion", "entries must be non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("confusion", "row " + std::to_string(i) + " does not sum to 1");
  }
}

namespace {

#define ROM_SCENARIO_FIELDS(X)                                                                  \
  X(seed) X(days) X(frames_per_day) X(frame_rate) X(day_period) X(extent_x) X(extent_y)         \
  X(sensor_range) X(sensor_min_range) X(sensor_height) X(robot_margin) X(car_slots_per_row)     \
  X(car_presence) X(pedestrian_rate) X(cyclist_rate) X(pedestrian_speed_min)                    \
  X(pedestrian_speed_max) X(cyclist_speed_min) X(cyclist_speed_max) X(crossing_fraction)        \
  X(point_spacing) X(spacing_gain) X(point_budget) X(noise_sigma) X(dropout) X(confusion)       \
  X(feature_jitter)

}  // namespace

std::string scenario_to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
#define ROM_WRITE(name) j[#name] = c.name;
  ROM_SCENARIO_FIELDS(ROM_WRITE)
#undef ROM_WRITE
  if (c.car_schedule) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : *c.car_schedule) {
      std::vector<int> ints(row.begin(), row.end());
      rows.push_back(ints);
    }
    j["car_schedule"] = rows;
  }
  return j.dump(2) + "\n";
}

ScenarioConfig scenario_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scenario: top level must be an object");
  ScenarioConfig c;
  std::set<std::string> known{"car_schedule"};
#define ROM_KNOWN(name) known.insert(#name);
  ROM_SCENARIO_FIELDS(ROM_KNOWN)
#undef ROM_KNOWN
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("scenario field '" + key + "': unknown field");
  }
  try {
#define ROM_READ(name) \
  if (j.contains(#name)) j.at(#name).get_to(c.name);
    ROM_SCENARIO_FIELDS(ROM_READ)
#undef ROM_READ
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: wrong type: ") + e.what());
  }
  if (j.contains("car_schedule") && !j["car_schedule"].is_null()) {
    std::vector<std::vector<bool>> rows;
    try {
      for (const auto& row : j["car_schedule"]) {
        std::vector<bool> r;
        for (const auto& v : row) r.push_back(v.get<int>() != 0);
        rows.push_back(r);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("scenario field 'car_schedule': ") + e.what());
    }
    c.car_schedule = rows;
  }
  c.validate();
  return c;
}

void save_scenario(const std::filesystem::path& path, const ScenarioConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  out << scenario_to_json(config);
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

}  // namespace rom

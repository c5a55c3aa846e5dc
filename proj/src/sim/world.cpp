#include "recurrent_octomap/sim/world.hpp"

#include <cmath>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/rng.hpp"

namespace rom {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Stream tags for Rng::derive so that each part of the world draws from its
// own sequence.
enum : std::uint64_t { kCarStream = 11, kPedStream = 12, kCycStream = 13 };

}  // namespace

bool SceneBox::contains(const Eigen::Vector3d& p, double tolerance) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p.x() - center.x(), dy = p.y() - center.y();
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * length + tolerance && std::abs(ly) <= 0.5 * width + tolerance &&
         p.z() >= z_min - tolerance && p.z() <= z_min + height + tolerance;
}

std::optional<SceneBox> Agent::at(double t) const {
  if (path.size() < 2 || t < path.front().t || t > path.back().t) return std::nullopt;
  std::size_t k = 1;
  while (k + 1 < path.size() && path[k].t < t) ++k;
  const auto& a = path[k - 1];
  const auto& b = path[k];
  const double span = b.t - a.t;
  const double u = span > 0.0 ? (t - a.t) / span : 0.0;
  const Eigen::Vector2d d = b.position - a.position;
  SceneBox box;
  box.center = a.position + u * d;
  box.yaw = std::atan2(d.y(), d.x());
  box.length = length;
  box.width = width;
  box.height = height;
  box.cls = cls;
  box.id = id;
  return box;
}

double World::robot_speed() const {
  const double m = config.robot_margin;
  const double perimeter = 2.0 * ((config.extent_x - 2 * m) + (config.extent_y - 2 * m));
  return perimeter / config.day_duration();
}

Pose World::sensor_pose(std::size_t frame) const {
  const double m = config.robot_margin;
  const double w = config.extent_x - 2 * m;
  const double h = config.extent_y - 2 * m;
  const double perimeter = 2.0 * (w + h);
  double s = std::fmod(static_cast<double>(frame) / static_cast<double>(config.frames_per_day), 1.0) *
             perimeter;
  Eigen::Vector2d p;
  double yaw;
  if (s < w) {
    p = {m + s, m};
    yaw = 0.0;
  } else if ((s -= w) < h) {
    p = {m + w, m + s};
    yaw = kPi / 2;
  } else if ((s -= h) < w) {
    p = {m + w - s, m + h};
    yaw = kPi;
  } else {
    s -= w;
    p = {m, m + h - s};
    yaw = -kPi / 2;
  }
  return Pose::from_yaw(yaw, {p.x(), p.y(), config.sensor_height});
}

std::vector<SceneBox> World::objects_at(std::size_t day, std::size_t frame) const {
  std::vector<SceneBox> out = background;
  const DayPlan& plan = days.at(day);
  out.insert(out.end(), plan.parked_cars.begin(), plan.parked_cars.end());
  const double t = static_cast<double>(frame) / config.frame_rate;
  for (const auto& agent : plan.agents) {
    if (auto box = agent.at(t)) out.push_back(*box);
  }
  return out;
}

namespace {

SceneBox make_box(Eigen::Vector2d c, double yaw, double l, double w, double h, SemanticClass cls,
                  std::uint32_t& next_id) {
  SceneBox b;
  b.center = c;
  b.yaw = yaw;
  b.length = l;
  b.width = w;
  b.height = h;
  b.cls = cls;
  b.id = next_id++;
  return b;
}

// Perimeter walls with an entrance gap, planters along the short sides and
// lamp posts down the aisle centre line.
std::vector<SceneBox> make_background(const ScenarioConfig& c, std::uint32_t& next_id) {
  std::vector<SceneBox> out;
  const double X = c.extent_x, Y = c.extent_y;
  const double t = 0.3, h = 1.2;
  auto wall_x = [&](double x0, double x1, double y) {
    out.push_back(make_box({0.5 * (x0 + x1), y}, 0.0, x1 - x0, t, h, SemanticClass::kBackground, next_id));
  };
  auto wall_y = [&](double y0, double y1, double x) {
    out.push_back(make_box({x, 0.5 * (y0 + y1)}, kPi / 2, y1 - y0, t, h, SemanticClass::kBackground, next_id));
  };
  // Walls are split into 10 m segments so no single box is huge.
  auto split = [](double a, double b, auto&& emit) {
    for (double s = a; s < b - 1e-9; s += 10.0) emit(s, std::min(b, s + 10.0));
  };
  const double gate0 = 0.5 * X - 3.0, gate1 = 0.5 * X + 3.0;
  split(0.0, gate0, [&](double a, double b) { wall_x(a, b, 0.0); });
  split(gate1, X, [&](double a, double b) { wall_x(a, b, 0.0); });
  split(0.0, X, [&](double a, double b) { wall_x(a, b, Y); });
  split(0.0, Y, [&](double a, double b) { wall_y(a, b, 0.0); });
  split(0.0, Y, [&](double a, double b) { wall_y(a, b, X); });
  for (double y : {0.25 * Y, 0.75 * Y}) {
    out.push_back(make_box({1.2, y}, 0.0, 1.5, 1.5, 0.8, SemanticClass::kBackground, next_id));
    out.push_back(make_box({X - 1.2, y}, 0.0, 1.5, 1.5, 0.8, SemanticClass::kBackground, next_id));
  }
  for (double fx : {0.25, 0.5, 0.75}) {
    out.push_back(make_box({fx * X, 0.5 * Y}, 0.0, 0.25, 0.25, 3.0, SemanticClass::kBackground, next_id));
  }
  return out;
}

Agent along_aisle(Rng& rng, const ScenarioConfig& c, SemanticClass cls, double y_lo, double y_hi,
                  double v_lo, double v_hi, std::uint32_t id) {
  Agent a;
  a.cls = cls;
  a.id = id;
  if (cls == SemanticClass::kCyclist) {
    a.length = rng.uniform(1.6, 1.9);
    a.width = rng.uniform(0.5, 0.7);
    a.height = rng.uniform(1.5, 1.8);
  } else {
    a.length = rng.uniform(0.4, 0.6);
    a.width = rng.uniform(0.4, 0.6);
    a.height = rng.uniform(1.55, 1.9);
  }
  const double y = rng.uniform(y_lo, y_hi);
  const double speed = rng.uniform(v_lo, v_hi);
  const bool forward = rng.bernoulli(0.5);
  const double x0 = forward ? 1.0 : c.extent_x - 1.0;
  const double x1 = forward ? c.extent_x - 1.0 : 1.0;
  const double travel = std::abs(x1 - x0) / speed;
  const double start = rng.uniform(-travel, c.day_duration());
  const double drift = rng.uniform(-0.5, 0.5);  // slight lateral wander
  a.path = {{start, {x0, y}},
            {start + 0.5 * travel, {0.5 * (x0 + x1), y + drift}},
            {start + travel, {x1, y}}};
  return a;
}

Agent crossing(Rng& rng, const ScenarioConfig& c, const std::vector<Eigen::Vector2d>& slots,
               std::uint32_t id) {
  Agent a;
  a.cls = SemanticClass::kPedestrian;
  a.id = id;
  a.length = rng.uniform(0.4, 0.6);
  a.width = rng.uniform(0.4, 0.6);
  a.height = rng.uniform(1.55, 1.9);
  // Walk between two neighbouring slots across both rows.
  const std::size_t per_row = slots.size() / 2;
  const std::size_t k = per_row > 1 ? rng.below(per_row - 1) : 0;
  const double x = per_row > 1 ? 0.5 * (slots[k].x() + slots[k + 1].x()) : slots[0].x() + 1.5;
  const double speed = rng.uniform(c.pedestrian_speed_min, c.pedestrian_speed_max);
  const bool north = rng.bernoulli(0.5);
  const double y0 = north ? 2.0 : c.extent_y - 2.0;
  const double y1 = north ? c.extent_y - 2.0 : 2.0;
  const double travel = std::abs(y1 - y0) / speed;
  const double start = rng.uniform(-travel, c.day_duration());
  a.path = {{start, {x, y0}}, {start + travel, {x, y1}}};
  return a;
}

}  // namespace

World generate_world(const ScenarioConfig& config) {
  if (!(config.extent_x > 0.0) || !(config.extent_y > 0.0)) {
    throw ArgumentError("generate_world: world extent must be positive");
  }
  config.validate();
  World w;
  w.config = config;
  std::uint32_t next_id = 1;
  w.background = make_background(config, next_id);

  const double X = config.extent_x, Y = config.extent_y;
  const std::size_t per_row = config.car_slots_per_row;
  const double span = X - 2.0 * (config.robot_margin + 2.0);
  const double pitch = per_row > 0 ? span / static_cast<double>(per_row) : 0.0;
  for (double row_y : {0.3 * Y, 0.7 * Y}) {
    for (std::size_t k = 0; k < per_row; ++k) {
      w.car_slots.emplace_back(config.robot_margin + 2.0 + (k + 0.5) * pitch, row_y);
    }
  }

  const double aisle_mid = 0.5 * Y;
  for (std::size_t day = 0; day < config.days; ++day) {
    DayPlan plan;
    Rng car_rng = Rng::derive(config.seed, kCarStream, day);
    for (std::size_t s = 0; s < w.car_slots.size(); ++s) {
      // Draws happen for every slot so the schedule does not shift the shapes.
      const bool random_present = car_rng.bernoulli(config.car_presence);
      const double l = car_rng.uniform(3.8, 4.6);
      const double wd = car_rng.uniform(1.7, 1.9);
      const double h = car_rng.uniform(1.4, 1.7);
      const double jitter = car_rng.uniform(-0.2, 0.2);
      const bool present = config.car_schedule ? (*config.car_schedule)[day][s] : random_present;
      plan.occupancy.push_back(present);
      if (!present) continue;
      SceneBox car;
      car.center = w.car_slots[s] + Eigen::Vector2d(0.0, jitter);
      car.yaw = kPi / 2;  // nose along y
      car.length = l;
      car.width = wd;
      car.height = h;
      car.cls = SemanticClass::kCar;
      car.id = 1000000 + static_cast<std::uint32_t>(day * 1000 + s);
      plan.parked_cars.push_back(car);
    }
    std::uint32_t agent_id = 2000000 + static_cast<std::uint32_t>(day * 1000);
    Rng ped_rng = Rng::derive(config.seed, kPedStream, day);
    const auto peds = ped_rng.poisson(config.pedestrian_rate);
    for (std::uint64_t i = 0; i < peds; ++i) {
      if (ped_rng.bernoulli(config.crossing_fraction) && !w.car_slots.empty()) {
        plan.agents.push_back(crossing(ped_rng, config, w.car_slots, agent_id++));
      } else {
        plan.agents.push_back(along_aisle(ped_rng, config, SemanticClass::kPedestrian, aisle_mid - 3.5,
                                          aisle_mid - 0.5, config.pedestrian_speed_min,
                                          config.pedestrian_speed_max, agent_id++));
      }
    }
    Rng cyc_rng = Rng::derive(config.seed, kCycStream, day);
    const auto cycs = cyc_rng.poisson(config.cyclist_rate);
    for (std::uint64_t i = 0; i < cycs; ++i) {
      plan.agents.push_back(along_aisle(cyc_rng, config, SemanticClass::kCyclist, aisle_mid + 0.5,
                                        aisle_mid + 3.5, config.cyclist_speed_min,
                                        config.cyclist_speed_max, agent_id++));
    }
    w.days.push_back(std::move(plan));
  }
  return w;
}

}  // namespace rom

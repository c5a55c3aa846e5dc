#include "recurrent_octomap/sim/render.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxTile = 2.0;  // faces are tiled so pitch follows range locally
enum : std::uint64_t { kRenderStream = 21, kShapeStream = 22 };

struct Face {
  Eigen::Vector3d origin;  // one corner
  Eigen::Vector3d u, v;    // edge vectors
  Eigen::Vector3d normal;
};

std::vector<Face> faces_of(const SceneBox& b) {
  const Eigen::Vector3d ex(std::cos(b.yaw), std::sin(b.yaw), 0.0);
  const Eigen::Vector3d ey(-std::sin(b.yaw), std::cos(b.yaw), 0.0);
  const Eigen::Vector3d ez(0.0, 0.0, 1.0);
  const Eigen::Vector3d c(b.center.x(), b.center.y(), b.z_min);
  const Eigen::Vector3d hx = 0.5 * b.length * ex, hy = 0.5 * b.width * ey, hz = b.height * ez;
  return {
      {c + hx - hy, 2 * hy, hz, ex},
      {c - hx - hy, 2 * hy, hz, -ex},
      {c - hx + hy, 2 * hx, hz, ey},
      {c - hx - hy, 2 * hx, hz, -ey},
      {c - hx - hy + hz, 2 * hx, 2 * hy, ez},
  };
}

std::size_t sample_once(std::span<const SceneBox> boxes, const Eigen::Vector3d& sensor,
                        const RenderParams& p, double scale, SurfaceSamples* out) {
  std::size_t count = 0;
  for (const auto& box : boxes) {
    for (const Face& f : faces_of(box)) {
      const double lu = f.u.norm(), lv = f.v.norm();
      const int tu = std::max(1, static_cast<int>(std::ceil(lu / kMaxTile)));
      const int tv = std::max(1, static_cast<int>(std::ceil(lv / kMaxTile)));
      for (int a = 0; a < tu; ++a)
        for (int b = 0; b < tv; ++b) {
          const Eigen::Vector3d o = f.origin + f.u * (double(a) / tu) + f.v * (double(b) / tv);
          const Eigen::Vector3d du = f.u / tu, dv = f.v / tv;
          const Eigen::Vector3d centre = o + 0.5 * (du + dv);
          if (f.normal.dot(sensor - centre) <= 0.0) continue;
          const double r = (centre - sensor).norm();
          if (r - 0.5 * (du + dv).norm() > p.max_range) continue;
          const double pitch = scale * (p.spacing + p.spacing_gain * r);
          const int nu = std::max(1, static_cast<int>(std::ceil(du.norm() / pitch)));
          const int nv = std::max(1, static_cast<int>(std::ceil(dv.norm() / pitch)));
          for (int i = 0; i < nu; ++i)
            for (int j = 0; j < nv; ++j) {
              const Eigen::Vector3d q = o + du * ((i + 0.5) / nu) + dv * ((j + 0.5) / nv);
              const double range = (q - sensor).norm();
              if (range > p.max_range || range < p.min_range) continue;
              ++count;
              if (out) {
                out->points.push_back(q);
                out->labels.push_back(box.cls);
                out->object_ids.push_back(box.id);
              }
            }
        }
    }
  }
  return count;
}

}  // namespace

RenderParams RenderParams::from(const ScenarioConfig& c) {
  return {c.sensor_range, c.sensor_min_range, c.point_spacing, c.spacing_gain, c.point_budget, c.noise_sigma};
}

SurfaceSamples sample_surfaces(std::span<const SceneBox> boxes, const Eigen::Vector3d& sensor,
                               const RenderParams& params, Rng& rng) {
  double scale = 1.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const std::size_t n = sample_once(boxes, sensor, params, scale, nullptr);
    if (n <= params.budget) break;
    // Point count falls roughly with the square of the pitch.
    scale *= std::sqrt(static_cast<double>(n) / static_cast<double>(params.budget)) * 1.02;
  }
  SurfaceSamples out;
  sample_once(boxes, sensor, params, scale, &out);
  if (out.points.size() > params.budget) {
    out.points.resize(params.budget);
    out.labels.resize(params.budget);
    out.object_ids.resize(params.budget);
  }
  if (params.noise_sigma > 0.0) {
    for (auto& q : out.points) {
      q.x() += rng.normal(0.0, params.noise_sigma);
      q.y() += rng.normal(0.0, params.noise_sigma);
      q.z() += rng.normal(0.0, params.noise_sigma);
    }
  }
  return out;
}

PointCloudScan render_scan(const World& world, std::size_t day, std::size_t frame) {
  if (day >= world.days.size()) throw ArgumentError("render_scan: day out of range");
  const auto boxes = world.objects_at(day, frame);
  PointCloudScan scan;
  scan.timestamp = world.config.frame_time(day, frame);
  scan.sensor_pose = world.sensor_pose(frame);
  Rng rng = Rng::derive(world.config.seed, kRenderStream, day, frame);
  auto samples = sample_surfaces(boxes, scan.sensor_pose.translation, RenderParams::from(world.config), rng);
  const Pose inv = scan.sensor_pose.inverse();
  scan.points.reserve(samples.points.size());
  for (const auto& q : samples.points) scan.points.push_back(inv.apply(q));
  scan.labels = std::move(samples.labels);
  return scan;
}

GroundTruthAccumulator::GroundTruthAccumulator(double resolution) : keyer_(MapConfig{resolution}) {}

void GroundTruthAccumulator::add(std::span<const Eigen::Vector3d> map_points,
                                 std::span<const SemanticClass> labels) {
  if (labels.size() != map_points.size()) throw ArgumentError("ground truth: labels do not match points");
  for (std::size_t i = 0; i < map_points.size(); ++i) {
    masks_[keyer_.key_of(map_points[i])] |= static_cast<std::uint8_t>(1u << class_index(labels[i]));
  }
}

VoxelMap GroundTruthAccumulator::finish() const {
  VoxelMap gt(keyer_.config());
  for (const auto& [key, mask] : masks_) {
    Cell& c = gt.touch(key);
    if (std::has_single_bit(static_cast<unsigned>(mask))) {
      c.gt_label = class_from_index(static_cast<std::size_t>(std::countr_zero(static_cast<unsigned>(mask))));
    } else {
      c.gt_label = SemanticClass::kDontCare;
    }
  }
  return gt;
}

VoxelMap build_ground_truth(const World& world, std::size_t day, double resolution) {
  GroundTruthAccumulator acc(resolution);
  for (std::size_t f = 0; f < world.config.frames_per_day; ++f) {
    const auto scan = render_scan(world, day, f);
    acc.add(to_map_frame(scan), scan.labels);
  }
  return acc.finish();
}

std::vector<PointCloudScan> generate_shapes_corpus(std::uint64_t seed, std::size_t count,
                                                   const RenderParams& params, double sensor_height) {
  std::vector<PointCloudScan> corpus;
  corpus.reserve(count);
  const Eigen::Vector3d sensor = Eigen::Vector3d::Zero();
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng = Rng::derive(seed, kShapeStream, n);
    std::vector<SceneBox> boxes;
    const std::size_t objects = 3 + rng.below(4);
    std::uint32_t id = 1;
    for (std::size_t k = 0; k < objects * 10 && boxes.size() < objects; ++k) {
      SceneBox b;
      b.z_min = -sensor_height;
      b.yaw = rng.uniform(-kPi, kPi);
      b.id = id;
      // Cycle through the classes so the corpus stays balanced; background
      // draws one of three shapes.
      switch ((n + boxes.size()) % 4) {
        case 0: {
          b.cls = SemanticClass::kBackground;
          const auto shape = rng.below(3);
          if (shape == 0) {
            b.length = rng.uniform(2.5, 7.0), b.width = 0.3, b.height = rng.uniform(1.0, 1.4);
          } else if (shape == 1) {
            b.length = rng.uniform(1.2, 1.8), b.width = rng.uniform(1.2, 1.8), b.height = rng.uniform(0.6, 0.9);
          } else {
            b.length = b.width = rng.uniform(0.2, 0.3), b.height = rng.uniform(2.5, 3.5);
          }
          break;
        }
        case 1:
          b.cls = SemanticClass::kCar;
          b.length = rng.uniform(3.8, 4.6), b.width = rng.uniform(1.7, 1.9), b.height = rng.uniform(1.4, 1.7);
          break;
        case 2:
          b.cls = SemanticClass::kPedestrian;
          b.length = rng.uniform(0.4, 0.6), b.width = rng.uniform(0.4, 0.6), b.height = rng.uniform(1.55, 1.9);
          break;
        default:
          b.cls = SemanticClass::kCyclist;
          b.length = rng.uniform(1.6, 1.9), b.width = rng.uniform(0.5, 0.7), b.height = rng.uniform(1.5, 1.8);
          break;
      }
      const double r = rng.uniform(4.0, 0.8 * params.max_range);
      const double az = rng.uniform(-kPi, kPi);
      b.center = {r * std::cos(az), r * std::sin(az)};
      const double radius = 0.5 * std::hypot(b.length, b.width);
      const bool clear = std::all_of(boxes.begin(), boxes.end(), [&](const SceneBox& o) {
        return (o.center - b.center).norm() > radius + 0.5 * std::hypot(o.length, o.width) + 1.5;
      });
      if (!clear) continue;
      boxes.push_back(b);
      ++id;
    }
    auto samples = sample_surfaces(boxes, sensor, params, rng);
    PointCloudScan scan;
    scan.timestamp = static_cast<double>(n);
    scan.points = std::move(samples.points);
    scan.labels = std::move(samples.labels);
    corpus.push_back(std::move(scan));
  }
  return corpus;
}

}  // namespace rom

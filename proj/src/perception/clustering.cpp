#include "recurrent_octomap/perception/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {
namespace {

struct GridKey {
  std::int64_t x, y, z;
  bool operator==(const GridKey&) const = default;
};

struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Smaller index becomes the root so roots are deterministic.
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

void ClusterConfig::validate() const {
  if (!(base_threshold > 0.0) || !(range_gain >= 0.0) || min_points == 0) {
    throw ConfigError("clustering: base_threshold > 0, range_gain >= 0, min_points >= 1 required");
  }
}

bool ObjectnessBox::contains(const Eigen::Vector3d& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

double linkage_threshold(const ClusterConfig& config, double range) {
  return config.base_threshold + config.range_gain * range;
}

bool points_linked(const ClusterConfig& config, const Eigen::Vector3d& a,
                   const Eigen::Vector3d& b) {
  const double range = std::max(a.norm(), b.norm());
  return (a - b).norm() <= linkage_threshold(config, range);
}

ObjectnessBox make_box(std::span<const Eigen::Vector3d> points, std::vector<std::size_t> members) {
  if (members.empty()) throw ArgumentError("make_box: no members");
  std::sort(members.begin(), members.end());
  ObjectnessBox box;
  box.min = box.max = points[members.front()];
  for (std::size_t i : members) {
    box.min = box.min.cwiseMin(points[i]);
    box.max = box.max.cwiseMax(points[i]);
  }
  box.members = std::move(members);
  return box;
}

std::vector<ObjectnessBox> cluster_objectness(const PointCloudScan& scan,
                                              const ClusterConfig& config) {
  config.validate();
  const auto& pts = scan.points;
  if (pts.empty()) return {};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].allFinite()) throw ArgumentError("cluster_objectness: non-finite point");
  }

  double max_range = 0.0;
  for (const auto& p : pts) max_range = std::max(max_range, p.norm());
  // No linked pair can be further apart than the largest threshold, so a
  // grid of that pitch only needs the 27-neighbourhood.
  const double cell = linkage_threshold(config, max_range);
  auto key_of = [cell](const Eigen::Vector3d& p) {
    return GridKey{static_cast<std::int64_t>(std::floor(p.x() / cell)),
                   static_cast<std::int64_t>(std::floor(p.y() / cell)),
                   static_cast<std::int64_t>(std::floor(p.z() / cell))};
  };
  std::unordered_map<GridKey, std::vector<std::size_t>, GridKeyHash> grid;
  grid.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) grid[key_of(pts[i])].push_back(i);

  DisjointSets sets(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const GridKey k = key_of(pts[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if (j <= i) continue;
            if (points_linked(config, pts[i], pts[j])) sets.unite(i, j);
          }
        }
  }

  std::unordered_map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pts.size(); ++i) groups[sets.find(i)].push_back(i);

  std::vector<ObjectnessBox> boxes;
  for (auto& [root, members] : groups) {
    if (members.size() < config.min_points) continue;
    boxes.push_back(make_box(pts, std::move(members)));
  }
  std::sort(boxes.begin(), boxes.end(), [](const ObjectnessBox& a, const ObjectnessBox& b) {
    return a.members.front() < b.members.front();
  });
  return boxes;
}

std::vector<std::size_t> unclustered_points(std::size_t point_count,
                                            std::span<const ObjectnessBox> boxes) {
  std::vector<bool> used(point_count, false);
  for (const auto& b : boxes)
    for (std::size_t i : b.members) used[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < point_count; ++i)
    if (!used[i]) out.push_back(i);
  return out;
}

SemanticClass majority_label(std::span<const SemanticClass> labels,
                             std::span<const std::size_t> members) {
  std::array<std::size_t, kClassCount> counts{};
  for (std::size_t i : members) ++counts[class_index(labels[i])];
  const std::size_t best = *std::max_element(counts.begin(), counts.end());
  if (counts[0] == best) return SemanticClass::kBackground;
  for (std::size_t c = 1; c < kClassCount; ++c)
    if (counts[c] == best) return class_from_index(c);
  return SemanticClass::kBackground;
}

}  // namespace rom

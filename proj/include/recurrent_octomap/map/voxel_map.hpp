#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "recurrent_octomap/neural/lstm.hpp"
#include "recurrent_octomap/neural/matrix.hpp"
#include "recurrent_octomap/perception/scan.hpp"

namespace rom {

/// Integer voxel coordinates, floor(world / resolution) per axis.
struct CellKey {
  std::int32_t ix = 0;
  std::int32_t iy = 0;
  std::int32_t iz = 0;

  auto operator<=>(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const;
};

struct Cell {
  double occupancy = 0.0;  // log-odds
  Vector feature;          // latest pooled f_cell
  LstmState state;         // recurrent state, empty until a recurrent backend touches it
  Vector prob;             // class probabilities, empty until fused
  double last_obs_time = 0.0;
  std::optional<SemanticClass> gt_label;

  bool operator==(const Cell&) const = default;
};

struct MapConfig {
  double resolution = 0.4;
  double retention_window = 300.0;  // seconds
  double hit = 0.85;
  double miss = -0.4;
  double clamp_min = -3.5;
  double clamp_max = 3.5;
  bool ray_updates = false;

  void validate() const;
  bool operator==(const MapConfig&) const = default;
};

/// Per-cell result of one scan insertion.
struct CellObservation {
  CellKey key;
  Vector feature;     // mean of member point features
  Vector likelihood;  // mean of member point class probabilities (empty if none given)
  std::size_t point_count = 0;
  std::optional<double> previous_obs_time;  // empty for a cell seen for the first time
};

/// Scan points mapped into the global frame by the scan pose.
std::vector<Eigen::Vector3d> to_map_frame(const PointCloudScan& scan);

/// Sparse voxel grid. Only observed cells exist.
class VoxelMap {
 public:
  using Storage = std::unordered_map<CellKey, Cell, CellKeyHash>;

  explicit VoxelMap(MapConfig config = {});

  const MapConfig& config() const { return config_; }
  CellKey key_of(const Eigen::Vector3d& p) const;
  Eigen::Vector3d cell_center(const CellKey& key) const;

  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  bool contains(const CellKey& key) const { return cells_.count(key) != 0; }
  Cell* find(const CellKey& key);
  const Cell* find(const CellKey& key) const;
  /// Creates the cell if missing.
  Cell& touch(const CellKey& key);
  bool erase(const CellKey& key) { return cells_.erase(key) != 0; }
  void clear();

  const Storage& cells() const { return cells_; }
  std::vector<CellKey> sorted_keys() const;

  /// Time of the most recent insertion (negative infinity before any).
  double latest_time() const { return latest_time_; }

  /// Buckets map-frame points into cells and updates each touched cell once:
  /// f_cell is the mean of member features (and the likelihood the mean of
  /// member probabilities when `probs` is given), occupancy gets one hit.
  /// Rows of `features` / `probs` align with `points`. Observations come back
  /// sorted by key. With ray updates enabled, existing cells crossed between
  /// `origin` and each point receive a miss.
  std::vector<CellObservation> insert_scan(std::span<const Eigen::Vector3d> points,
                                           const Matrix& features, const Matrix* probs,
                                           double time,
                                           const std::optional<Eigen::Vector3d>& origin = {});

  /// Removes every cell whose last observation is more than the retention
  /// window before `now`. Returns the number removed.
  std::size_t prune_expired(double now);

  bool operator==(const VoxelMap& other) const;

 private:
  void ray_miss(const Eigen::Vector3d& from, const Eigen::Vector3d& to,
                const std::vector<CellKey>& hit_keys);

  MapConfig config_;
  Storage cells_;
  double latest_time_;
};

/// Versioned binary snapshot:
///   "RCOCTMAP" | u32 version | f64 resolution | u64 count | per cell, keys ascending:
///   i32 ix iy iz | f64 occupancy | u32 n + f64 feature[n] | u32 layers, per layer
///   (u32 n + f64 cell[n], u32 n + f64 hidden[n]) | u32 n + f64 prob[n] |
///   f64 last_obs_time | u8 has_label | u8 label
void write_map(std::ostream& out, const VoxelMap& map);
VoxelMap read_map(std::istream& in, MapConfig config = {});
void save_map(const std::filesystem::path& path, const VoxelMap& map);
VoxelMap load_map(const std::filesystem::path& path, MapConfig config = {});

inline constexpr std::uint32_t kMapFormatVersion = 1;

}  // namespace rom

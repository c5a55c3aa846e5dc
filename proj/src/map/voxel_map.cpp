#include "recurrent_octomap/map/voxel_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "recurrent_octomap/common/binary_io.hpp"
#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/rng.hpp"

namespace rom {

std::size_t CellKeyHash::operator()(const CellKey& k) const {
  const std::uint64_t packed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.ix)) << 42) ^
                               (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.iy)) << 21) ^
                               static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.iz));
  return static_cast<std::size_t>(mix64(packed));
}

void MapConfig::validate() const {
  if (!(resolution > 0.0)) throw ConfigError("map: resolution must be positive");
  if (!(retention_window >= 0.0)) throw ConfigError("map: retention_window must be >= 0");
  if (!(clamp_min < clamp_max)) throw ConfigError("map: clamp_min must be below clamp_max");
}

std::vector<Eigen::Vector3d> to_map_frame(const PointCloudScan& scan) {
  scan.sensor_pose.validate();
  std::vector<Eigen::Vector3d> out;
  out.reserve(scan.points.size());
  for (const auto& p : scan.points) out.push_back(scan.sensor_pose.apply(p));
  return out;
}

VoxelMap::VoxelMap(MapConfig config)
    : config_(config), latest_time_(-std::numeric_limits<double>::infinity()) {
  config_.validate();
}

CellKey VoxelMap::key_of(const Eigen::Vector3d& p) const {
  auto q = [this](double v) {
    const double f = std::floor(v / config_.resolution);
    if (!(std::abs(f) < 2147483647.0)) throw ArgumentError("point outside representable map");
    return static_cast<std::int32_t>(f);
  };
  return {q(p.x()), q(p.y()), q(p.z())};
}

Eigen::Vector3d VoxelMap::cell_center(const CellKey& key) const {
  return (Eigen::Vector3d(key.ix, key.iy, key.iz) + Eigen::Vector3d::Constant(0.5)) *
         config_.resolution;
}

Cell* VoxelMap::find(const CellKey& key) {
  auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

const Cell* VoxelMap::find(const CellKey& key) const {
  auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

Cell& VoxelMap::touch(const CellKey& key) { return cells_[key]; }

void VoxelMap::clear() {
  cells_.clear();
  latest_time_ = -std::numeric_limits<double>::infinity();
}

std::vector<CellKey> VoxelMap::sorted_keys() const {
  std::vector<CellKey> keys;
  keys.reserve(cells_.size());
  for (const auto& [k, c] : cells_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

namespace {

// Member order used for the per-cell sums: by content, so that a permuted
// scan sums the same values in the same order.
bool content_less(std::size_t a, std::size_t b, const Matrix& features, const Matrix* probs,
                  std::span<const Eigen::Vector3d> points) {
  const auto fa = features.row(a), fb = features.row(b);
  if (!std::equal(fa.begin(), fa.end(), fb.begin())) {
    return std::lexicographical_compare(fa.begin(), fa.end(), fb.begin(), fb.end());
  }
  if (probs) {
    const auto pa = probs->row(a), pb = probs->row(b);
    if (!std::equal(pa.begin(), pa.end(), pb.begin())) {
      return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
    }
  }
  const auto& x = points[a];
  const auto& y = points[b];
  return std::lexicographical_compare(x.data(), x.data() + 3, y.data(), y.data() + 3);
}

Vector mean_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Vector sum(m.cols(), 0.0);
  for (std::size_t r : rows) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += row[c];
  }
  const double n = static_cast<double>(rows.size());
  for (double& v : sum) v /= n;
  return sum;
}

}  // namespace

std::vector<CellObservation> VoxelMap::insert_scan(std::span<const Eigen::Vector3d> points,
                                                   const Matrix& features, const Matrix* probs,
                                                   double time,
                                                   const std::optional<Eigen::Vector3d>& origin) {
  if (!std::isfinite(time)) throw ArgumentError("insert_scan: non-finite time");
  if (time < latest_time_) {
    throw ArgumentError("insert_scan: stale timestamp " + std::to_string(time) +
                        " before latest " + std::to_string(latest_time_));
  }
  if (features.rows() != points.size()) {
    throw ArgumentError("insert_scan: " + std::to_string(features.rows()) + " feature rows for " +
                        std::to_string(points.size()) + " points");
  }
  if (probs && probs->rows() != points.size()) {
    throw ArgumentError("insert_scan: probability rows do not match points");
  }

  std::vector<std::pair<CellKey, std::size_t>> keyed;
  keyed.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) throw ArgumentError("insert_scan: non-finite point");
    keyed.emplace_back(key_of(points[i]), i);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<CellObservation> out;
  std::vector<CellKey> hit_keys;
  std::vector<std::size_t> members;
  for (std::size_t lo = 0; lo < keyed.size();) {
    std::size_t hi = lo;
    members.clear();
    while (hi < keyed.size() && keyed[hi].first == keyed[lo].first) members.push_back(keyed[hi++].second);
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return content_less(a, b, features, probs, points);
    });

    CellObservation obs;
    obs.key = keyed[lo].first;
    obs.feature = mean_rows(features, members);
    if (probs) obs.likelihood = mean_rows(*probs, members);
    obs.point_count = members.size();

    auto [it, fresh] = cells_.try_emplace(obs.key);
    Cell& cell = it->second;
    if (!fresh) obs.previous_obs_time = cell.last_obs_time;
    cell.occupancy = std::clamp(cell.occupancy + config_.hit, config_.clamp_min, config_.clamp_max);
    cell.feature = obs.feature;
    cell.last_obs_time = time;
    hit_keys.push_back(obs.key);
    out.push_back(std::move(obs));
    lo = hi;
  }

  if (config_.ray_updates && origin) {
    for (const auto& p : points) ray_miss(*origin, p, hit_keys);
  }
  latest_time_ = time;
  return out;
}

void VoxelMap::ray_miss(const Eigen::Vector3d& from, const Eigen::Vector3d& to,
                        const std::vector<CellKey>& hit_keys) {
  // Voxel traversal from the sensor towards the endpoint, excluding the
  // endpoint cell. Only cells that already exist are decremented.
  const CellKey end = key_of(to);
  CellKey cur = key_of(from);
  const Eigen::Vector3d dir = to - from;
  const double length = dir.norm();
  if (length == 0.0) return;
  int step[3];
  double t_max[3], t_delta[3];
  std::int32_t* idx[3] = {&cur.ix, &cur.iy, &cur.iz};
  for (int a = 0; a < 3; ++a) {
    const double d = dir[a] / length;
    step[a] = d > 0 ? 1 : (d < 0 ? -1 : 0);
    if (step[a] == 0) {
      t_max[a] = t_delta[a] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double boundary = (*idx[a] + (step[a] > 0 ? 1 : 0)) * config_.resolution;
    t_max[a] = (boundary - from[a]) / d;
    t_delta[a] = config_.resolution / std::abs(d);
  }
  const std::size_t max_steps = static_cast<std::size_t>(3.0 * length / config_.resolution) + 3;
  for (std::size_t s = 0; s < max_steps && cur != end; ++s) {
    if (!std::binary_search(hit_keys.begin(), hit_keys.end(), cur)) {
      if (Cell* c = find(cur)) {
        c->occupancy = std::clamp(c->occupancy + config_.miss, config_.clamp_min, config_.clamp_max);
      }
    }
    const int a = t_max[0] < t_max[1] ? (t_max[0] < t_max[2] ? 0 : 2) : (t_max[1] < t_max[2] ? 1 : 2);
    if (t_max[a] > length) break;
    *idx[a] += step[a];
    t_max[a] += t_delta[a];
  }
}

std::size_t VoxelMap::prune_expired(double now) {
  return std::erase_if(cells_, [&](const auto& kv) {
    return now - kv.second.last_obs_time > config_.retention_window;
  });
}

bool VoxelMap::operator==(const VoxelMap& other) const {
  return config_ == other.config_ && cells_ == other.cells_;
}

namespace {

constexpr char kMapMagic[9] = "RCOCTMAP";
constexpr std::uint32_t kMaxLen = 1u << 24;

void write_vec(std::ostream& out, const Vector& v) {
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vector read_vec(std::istream& in, const std::string& field) {
  const auto n = binary::read<std::uint32_t>(in, field + " length");
  if (n > kMaxLen) throw LoadError("map snapshot: implausible length for '" + field + "'");
  Vector v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw LoadError("unexpected end of file while reading '" + field + "'");
  return v;
}

}  // namespace

void write_map(std::ostream& out, const VoxelMap& map) {
  binary::write_magic(out, kMapMagic);
  binary::write<std::uint32_t>(out, kMapFormatVersion);
  binary::write<double>(out, map.config().resolution);
  binary::write<std::uint64_t>(out, map.size());
  for (const auto& key : map.sorted_keys()) {
    const Cell& c = *map.find(key);
    binary::write<std::int32_t>(out, key.ix);
    binary::write<std::int32_t>(out, key.iy);
    binary::write<std::int32_t>(out, key.iz);
    binary::write<double>(out, c.occupancy);
    write_vec(out, c.feature);
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(c.state.cell.size()));
    for (std::size_t l = 0; l < c.state.cell.size(); ++l) {
      write_vec(out, c.state.cell[l]);
      write_vec(out, c.state.hidden[l]);
    }
    write_vec(out, c.prob);
    binary::write<double>(out, c.last_obs_time);
    binary::write<std::uint8_t>(out, c.gt_label.has_value());
    binary::write<std::uint8_t>(out, c.gt_label ? static_cast<std::uint8_t>(*c.gt_label) : 0);
  }
}

VoxelMap read_map(std::istream& in, MapConfig config) {
  binary::expect_magic(in, kMapMagic, "map snapshot");
  const auto version = binary::read<std::uint32_t>(in, "version");
  if (version != kMapFormatVersion) {
    throw LoadError("map snapshot: unsupported version " + std::to_string(version));
  }
  config.resolution = binary::read<double>(in, "resolution");
  if (!(config.resolution > 0.0)) throw LoadError("map snapshot: invalid 'resolution'");
  VoxelMap map(config);
  const auto count = binary::read<std::uint64_t>(in, "cell count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string at = "cell[" + std::to_string(i) + "].";
    CellKey key;
    key.ix = binary::read<std::int32_t>(in, at + "ix");
    key.iy = binary::read<std::int32_t>(in, at + "iy");
    key.iz = binary::read<std::int32_t>(in, at + "iz");
    if (map.contains(key)) throw LoadError("map snapshot: duplicate key at '" + at + "ix'");
    Cell c;
    c.occupancy = binary::read<double>(in, at + "occupancy");
    c.feature = read_vec(in, at + "feature");
    const auto layers = binary::read<std::uint32_t>(in, at + "layers");
    if (layers > 64) throw LoadError("map snapshot: implausible value for '" + at + "layers'");
    for (std::uint32_t l = 0; l < layers; ++l) {
      c.state.cell.push_back(read_vec(in, at + "state.cell[" + std::to_string(l) + "]"));
      c.state.hidden.push_back(read_vec(in, at + "state.hidden[" + std::to_string(l) + "]"));
    }
    c.prob = read_vec(in, at + "prob");
    c.last_obs_time = binary::read<double>(in, at + "last_obs_time");
    const auto has_label = binary::read<std::uint8_t>(in, at + "has_label");
    const auto label = binary::read<std::uint8_t>(in, at + "label");
    if (has_label > 1) throw LoadError("map snapshot: invalid '" + at + "has_label'");
    if (has_label) {
      const auto cls = class_from_id(label);
      if (!cls) throw LoadError("map snapshot: invalid '" + at + "label' " + std::to_string(label));
      c.gt_label = *cls;
    }
    map.touch(key) = std::move(c);
  }
  return map;
}

void save_map(const std::filesystem::path& path, const VoxelMap& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  write_map(out, map);
  if (!out) throw LoadError("failed writing " + path.string());
}

VoxelMap load_map(const std::filesystem::path& path, MapConfig config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open map snapshot " + path.string());
  try {
    return read_map(in, config);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace rom

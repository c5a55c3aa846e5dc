#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/map/voxel_map.hpp"

using namespace rom;

namespace {

using KeyTuple = std::tuple<long, long, long>;

KeyTuple floor_key(const Eigen::Vector3d& p, double res) {
  return {static_cast<long>(std::floor(p.x() / res)), static_cast<long>(std::floor(p.y() / res)),
          static_cast<long>(std::floor(p.z() / res))};
}

struct RandomScan {
  std::vector<Eigen::Vector3d> points;
  Matrix features;
  Matrix probs;
};

RandomScan random_scan(Rng& rng, std::size_t n, std::size_t dim, double spread) {
  RandomScan s;
  s.features = Matrix(n, dim);
  s.probs = Matrix(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    s.points.emplace_back(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                          rng.uniform(0, 2));
    for (double& v : s.features.row(i)) v = rng.uniform(-1, 1);
    double z = 0;
    for (double& v : s.probs.row(i)) z += (v = rng.uniform(0.01, 1));
    for (double& v : s.probs.row(i)) v /= z;
  }
  return s;
}

Matrix single_row(std::initializer_list<double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

}  // namespace

TEST_CASE("to_map_frame examples") {
  PointCloudScan scan;
  scan.points = {{1, 2, 3}, {0, 0, 0}};
  CHECK(to_map_frame(scan) == scan.points);
  scan.sensor_pose.translation = {1, 2, 3};
  CHECK(to_map_frame(scan)[1] == Eigen::Vector3d(1, 2, 3));
  scan.sensor_pose.rotation(0, 1) = 0.1;
  CHECK_THROWS_AS(to_map_frame(scan), ArgumentError);
}

TEST_CASE("to_map_frame round trip under random poses") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    PointCloudScan scan;
    scan.sensor_pose = Pose::from_quaternion(q, {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 5)});
    for (int i = 0; i < 20; ++i) scan.points.emplace_back(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-3, 3));
    const auto world = to_map_frame(scan);
    const Pose inv = scan.sensor_pose.inverse();
    for (std::size_t i = 0; i < world.size(); ++i) {
      const Eigen::Vector3d back = scan.sensor_pose.apply(inv.apply(world[i]));
      CHECK((back - world[i]).norm() < 1e-9);
      CHECK((inv.apply(world[i]) - scan.points[i]).norm() < 1e-9);
    }
  }
}

TEST_CASE("cell keys floor-quantize") {
  VoxelMap map;
  CHECK(map.key_of({0.0, 0.39, 0.41}) == CellKey{0, 0, 1});
  CHECK(map.key_of({-0.01, -0.4, -0.41}) == CellKey{-1, -1, -2});
  const CellKey k{3, -2, 5};
  const auto c = map.cell_center(k);
  CHECK(map.key_of(c) == k);
}

TEST_CASE("feature pooling examples") {
  VoxelMap map;
  const std::vector<Eigen::Vector3d> pts{{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}};
  Matrix same = Matrix::from_rows({{1.5, -2.0}, {1.5, -2.0}});
  auto obs = map.insert_scan(pts, same, nullptr, 0.0);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].feature == Vector{1.5, -2.0});
  CHECK(obs[0].point_count == 2);
  CHECK_FALSE(obs[0].previous_obs_time.has_value());

  Matrix uv = Matrix::from_rows({{1.0, 4.0}, {3.0, -2.0}});
  obs = map.insert_scan(pts, uv, nullptr, 1.0);
  CHECK(obs[0].feature == Vector{2.0, 1.0});
  CHECK(obs[0].previous_obs_time == 0.0);
  CHECK(map.find({0, 0, 0})->feature == Vector{2.0, 1.0});
  CHECK(map.find({0, 0, 0})->last_obs_time == 1.0);
}

TEST_CASE("per-cell means match group-by oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_scan(rng, 500, 5, 3.0);
    VoxelMap map;
    const auto obs = map.insert_scan(s.points, s.features, &s.probs, 0.0);
    std::map<KeyTuple, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < s.points.size(); ++i) groups[floor_key(s.points[i], 0.4)].push_back(i);
    REQUIRE(obs.size() == groups.size());
    CHECK(map.size() == groups.size());
    std::size_t k = 0;
    for (const auto& [key, members] : groups) {
      const auto& o = obs[k++];
      CHECK(KeyTuple{o.key.ix, o.key.iy, o.key.iz} == key);
      for (std::size_t c = 0; c < 5; ++c) {
        long double sum = 0;
        for (std::size_t i : members) sum += s.features(i, c);
        CHECK(o.feature[c] == doctest::Approx(static_cast<double>(sum / members.size())).epsilon(1e-12));
      }
      double psum = 0;
      for (double p : o.likelihood) psum += p;
      CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("insertion is exactly invariant to point order") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_scan(rng, 300, 4, 1.0);  // dense: many points per cell
    std::vector<std::size_t> order(s.points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    RandomScan p;
    p.features = Matrix(order.size(), 4);
    p.probs = Matrix(order.size(), 4);
    for (std::size_t r = 0; r < order.size(); ++r) {
      p.points.push_back(s.points[order[r]]);
      std::copy(s.features.row(order[r]).begin(), s.features.row(order[r]).end(), p.features.row(r).begin());
      std::copy(s.probs.row(order[r]).begin(), s.probs.row(order[r]).end(), p.probs.row(r).begin());
    }
    VoxelMap a, b;
    a.insert_scan(s.points, s.features, &s.probs, 5.0);
    b.insert_scan(p.points, p.features, &p.probs, 5.0);
    CHECK(a == b);
  }
}

TEST_CASE("occupancy stays clamped and keys are exactly the quantized points") {
  Rng rng(4);
  MapConfig cfg;
  cfg.ray_updates = true;
  VoxelMap map(cfg);
  std::set<KeyTuple> expected;
  for (int frame = 0; frame < 40; ++frame) {
    const auto s = random_scan(rng, 60, 2, 4.0);
    for (const auto& p : s.points) expected.insert(floor_key(p, 0.4));
    map.insert_scan(s.points, s.features, nullptr, frame, Eigen::Vector3d(0, 0, 1));
    for (const auto& [k, c] : map.cells()) {
      CHECK(c.occupancy >= cfg.clamp_min);
      CHECK(c.occupancy <= cfg.clamp_max);
    }
  }
  std::set<KeyTuple> got;
  for (const auto& k : map.sorted_keys()) got.insert({k.ix, k.iy, k.iz});
  CHECK(got == expected);
  CHECK(map.find(map.sorted_keys().front())->occupancy <= 3.5);
}

TEST_CASE("repeated hits saturate at the clamp") {
  VoxelMap map;
  const std::vector<Eigen::Vector3d> pts{{0.1, 0.1, 0.1}};
  for (int i = 0; i < 10; ++i) map.insert_scan(pts, single_row({0.0}), nullptr, i);
  CHECK(map.find({0, 0, 0})->occupancy == 3.5);
}

TEST_CASE("ray updates decrement only existing crossed cells") {
  MapConfig cfg;
  cfg.ray_updates = true;
  VoxelMap map(cfg);
  const std::vector<Eigen::Vector3d> mid{{2.1, 0.1, 0.1}};
  map.insert_scan(mid, single_row({1.0}), nullptr, 0.0, Eigen::Vector3d(0.1, 0.1, 0.1));
  CHECK(map.find({5, 0, 0})->occupancy == doctest::Approx(0.85));
  const std::vector<Eigen::Vector3d> far{{4.1, 0.1, 0.1}};
  map.insert_scan(far, single_row({1.0}), nullptr, 1.0, Eigen::Vector3d(0.1, 0.1, 0.1));
  CHECK(map.find({5, 0, 0})->occupancy == doctest::Approx(0.45));
  CHECK(map.size() == 2);  // no free cells created
}

TEST_CASE("insert errors") {
  VoxelMap map;
  const std::vector<Eigen::Vector3d> pts{{0.1, 0.1, 0.1}};
  map.insert_scan(pts, single_row({0.0}), nullptr, 10.0);
  CHECK_THROWS_AS(map.insert_scan(pts, single_row({0.0}), nullptr, 9.0), ArgumentError);
  CHECK_THROWS_AS(map.insert_scan(pts, Matrix(2, 1), nullptr, 11.0), ArgumentError);
  CHECK_NOTHROW(map.insert_scan(pts, single_row({0.0}), nullptr, 10.0));
  CHECK_THROWS_AS(VoxelMap(MapConfig{0.0}), ConfigError);
}

TEST_CASE("pruning boundaries") {
  VoxelMap map;
  map.touch({0, 0, 0}).last_obs_time = 1.0;    // 299 s old at t=300
  map.touch({1, 0, 0}).last_obs_time = -1.0;   // 301 s old
  map.touch({2, 0, 0}).last_obs_time = 0.0;    // exactly 300 s old
  CHECK(map.prune_expired(300.0) == 1);
  CHECK(map.contains({0, 0, 0}));
  CHECK(map.contains({2, 0, 0}));
  CHECK_FALSE(map.contains({1, 0, 0}));
}

TEST_CASE("pruning matches a filter oracle and erases every field") {
  Rng rng(5);
  VoxelMap map;
  std::map<KeyTuple, double> times;
  for (int i = 0; i < 2000; ++i) {
    const CellKey k{static_cast<int>(rng.below(50)), static_cast<int>(rng.below(50)), static_cast<int>(rng.below(5))};
    const double t = rng.uniform(0, 1000);
    Cell& c = map.touch(k);
    c.last_obs_time = t;
    c.state = LstmState::zeros(2, 3);
    c.prob = {0.25, 0.25, 0.25, 0.25};
    times[{k.ix, k.iy, k.iz}] = t;
  }
  map.prune_expired(900.0);
  std::set<KeyTuple> expected;
  for (const auto& [k, t] : times)
    if (900.0 - t <= 300.0) expected.insert(k);
  std::set<KeyTuple> got;
  for (const auto& k : map.sorted_keys()) got.insert({k.ix, k.iy, k.iz});
  CHECK(got == expected);
  // A re-observed pruned cell starts from scratch.
  const auto victim = std::find_if(times.begin(), times.end(), [](const auto& kv) { return kv.second < 100; });
  REQUIRE(victim != times.end());
  const CellKey vk{static_cast<int>(std::get<0>(victim->first)), static_cast<int>(std::get<1>(victim->first)),
                   static_cast<int>(std::get<2>(victim->first))};
  const Cell& fresh = map.touch(vk);
  CHECK(fresh.state.cell.empty());
  CHECK(fresh.prob.empty());
  CHECK(fresh.occupancy == 0.0);
}

TEST_CASE("snapshot round trips") {
  SUBCASE("empty") {
    VoxelMap map;
    std::stringstream ss;
    write_map(ss, map);
    CHECK(read_map(ss) == map);
  }
  SUBCASE("one cell") {
    VoxelMap map;
    Cell& c = map.touch({-3, 7, 1});
    c.occupancy = 0.85;
    c.feature = {0.1, 1.0 / 3.0};
    c.state = LstmState::zeros(2, 2);
    c.state.hidden[1][0] = std::nextafter(0.5, 1.0);
    c.prob = {0.7, 0.1, 0.1, 0.1};
    c.last_obs_time = 123.456;
    c.gt_label = SemanticClass::kDontCare;
    std::stringstream ss;
    write_map(ss, map);
    CHECK(read_map(ss) == map);
  }
  SUBCASE("10k seeded cells") {
    Rng rng(6);
    VoxelMap map(MapConfig{0.25});
    while (map.size() < 10000) {
      Cell& c = map.touch({static_cast<int>(rng.below(1000)) - 500, static_cast<int>(rng.below(1000)) - 500,
                           static_cast<int>(rng.below(20))});
      c.occupancy = rng.uniform(-3.5, 3.5);
      c.feature.assign(8, 0.0);
      for (double& v : c.feature) v = rng.normal();
      if (rng.bernoulli(0.5)) {
        c.state = LstmState::zeros(2, 4);
        for (auto& layer : c.state.cell)
          for (double& v : layer) v = rng.normal();
      }
      c.prob = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
      c.last_obs_time = rng.uniform(0, 1e6);
      if (rng.bernoulli(0.3)) c.gt_label = class_from_index(rng.below(4));
    }
    std::stringstream ss;
    write_map(ss, map);
    const auto back = read_map(ss);
    CHECK(back.config().resolution == 0.25);
    CHECK(back == map);
  }
}

TEST_CASE("corrupt snapshots name the failing field") {
  VoxelMap map;
  map.touch({1, 2, 3}).feature = {1.0, 2.0};
  std::stringstream ss;
  write_map(ss, map);
  const std::string bytes = ss.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 30));
  try {
    read_map(truncated);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("cell[0]") != std::string::npos);
  }
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  std::stringstream v(wrong_version);
  CHECK_THROWS_WITH_AS(read_map(v), doctest::Contains("version"), LoadError);
  std::stringstream magic("NOTAMAP!");
  CHECK_THROWS_AS(read_map(magic), LoadError);
}

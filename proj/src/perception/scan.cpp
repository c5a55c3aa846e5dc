#include "recurrent_octomap/perception/scan.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

std::string_view to_string(SemanticClass c) {
  switch (c) {
    case SemanticClass::kBackground:
      return "background";
    case SemanticClass::kCar:
      return "car";
    case SemanticClass::kPedestrian:
      return "pedestrian";
    case SemanticClass::kCyclist:
      return "cyclist";
    case SemanticClass::kDontCare:
      return "dont_care";
  }
  return "unknown";
}

std::size_t class_index(SemanticClass c) {
  if (c == SemanticClass::kDontCare) throw ArgumentError("DontCare has no class index");
  return static_cast<std::size_t>(c);
}

SemanticClass class_from_index(std::size_t index) {
  if (index >= kClassCount) throw ArgumentError("class index out of range");
  return static_cast<SemanticClass>(index);
}

std::optional<SemanticClass> class_from_id(int id) {
  if (id >= 0 && id < static_cast<int>(kClassCount)) return static_cast<SemanticClass>(id);
  if (id == 255) return SemanticClass::kDontCare;
  return std::nullopt;
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
  Pose p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = t;
  return p;
}

Pose Pose::from_yaw(double yaw, const Eigen::Vector3d& t) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  p.translation = t;
  return p;
}

Pose Pose::inverse() const {
  Pose p;
  p.rotation = rotation.transpose();
  p.translation = -(p.rotation * translation);
  return p;
}

Pose Pose::operator*(const Pose& other) const {
  Pose p;
  p.rotation = rotation * other.rotation;
  p.translation = rotation * other.translation + translation;
  return p;
}

bool Pose::is_valid() const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= 1e-9 && rotation.determinant() > 0.0;
}

void Pose::validate() const {
  if (!is_valid()) throw ArgumentError("pose rotation is not orthonormal within 1e-9");
}

void PointCloudScan::validate() const {
  if (!std::isfinite(timestamp)) throw ArgumentError("scan timestamp is not finite");
  sensor_pose.validate();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw ArgumentError("scan point " + std::to_string(i) + " is not finite");
    }
  }
  if (!labels.empty() && labels.size() != points.size()) {
    throw ArgumentError("scan has " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(points.size()) + " points");
  }
}

void write_scan(std::ostream& out, const PointCloudScan& scan) {
  const auto q = scan.sensor_pose.quaternion();
  const auto& t = scan.sensor_pose.translation;
  char line[256];
  std::snprintf(line, sizeof line,
                "# timestamp %.6f pose %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                scan.timestamp, t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z());
  out << line;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const auto& p = scan.points[i];
    const int label = scan.has_labels() ? static_cast<int>(scan.labels[i]) : -1;
    std::snprintf(line, sizeof line, "%.6f %.6f %.6f %d\n", p.x(), p.y(), p.z(), label);
    out << line;
  }
}

PointCloudScan read_scan(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw LoadError("scan file: missing header line");
  std::istringstream hs(header);
  std::string hash, ts_key, pose_key;
  PointCloudScan scan;
  double tx, ty, tz, qw, qx, qy, qz;
  hs >> hash >> ts_key >> scan.timestamp >> pose_key >> tx >> ty >> tz >> qw >> qx >> qy >> qz;
  if (!hs || hash != "#" || ts_key != "timestamp" || pose_key != "pose") {
    throw LoadError("scan file: malformed header '" + header + "'");
  }
  scan.sensor_pose = Pose::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz), {tx, ty, tz});

  std::string line;
  bool any_label = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    double v[3];
    int label = -1;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (double& x : v) {
      while (p < end && *p == ' ') ++p;
      auto r = std::from_chars(p, end, x);
      if (r.ec != std::errc()) {
        throw LoadError("scan file: bad coordinate on line " + std::to_string(line_no));
      }
      p = r.ptr;
    }
    while (p < end && *p == ' ') ++p;
    auto r = std::from_chars(p, end, label);
    if (r.ec != std::errc()) {
      throw LoadError("scan file: bad label on line " + std::to_string(line_no));
    }
    scan.points.emplace_back(v[0], v[1], v[2]);
    if (label >= 0) {
      const auto c = class_from_id(label);
      if (!c || *c == SemanticClass::kDontCare) {
        throw LoadError("scan file: invalid label " + std::to_string(label) + " on line " +
                        std::to_string(line_no));
      }
      if (!any_label && scan.points.size() > 1) {
        throw LoadError("scan file: labels present on some points only");
      }
      any_label = true;
      scan.labels.push_back(*c);
    } else if (any_label) {
      throw LoadError("scan file: labels present on some points only");
    }
  }
  return scan;
}

void save_scan(const std::filesystem::path& path, const PointCloudScan& scan) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  write_scan(out, scan);
}

PointCloudScan load_scan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open scan file " + path.string());
  try {
    return read_scan(in);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void save_corpus(const std::filesystem::path& dir, const std::vector<PointCloudScan>& scans) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "recurrent_octomap.scan_corpus";
  manifest["version"] = 1;
  manifest["scans"] = nlohmann::json::array();
  for (std::size_t i = 0; i < scans.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scan_%06zu.txt", i);
    save_scan(dir / name, scans[i]);
    manifest["scans"].push_back(name);
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(1) << '\n';
}

std::vector<PointCloudScan> load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw LoadError("corpus " + dir.string() + " has no manifest.json");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corpus manifest: " + std::string(e.what()));
  }
  std::vector<PointCloudScan> scans;
  for (const auto& name : manifest.at("scans")) {
    scans.push_back(load_scan(dir / name.get<std::string>()));
  }
  return scans;
}

}  // namespace rom

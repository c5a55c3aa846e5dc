#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rom {

/// Semantic categories. DontCare only ever appears in ground truth.
enum class SemanticClass : std::uint8_t {
  kBackground = 0,
  kCar = 1,
  kPedestrian = 2,
  kCyclist = 3,
  kDontCare = 255,
};

inline constexpr std::size_t kClassCount = 4;

std::string_view to_string(SemanticClass c);

/// Index into probability vectors. Throws ArgumentError for DontCare.
std::size_t class_index(SemanticClass c);
SemanticClass class_from_index(std::size_t index);
/// Accepts 0..3 and 255; anything else yields nullopt.
std::optional<SemanticClass> class_from_id(int id);

/// Rigid transform from the sensor frame into the map frame.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);
  static Pose from_yaw(double yaw, const Eigen::Vector3d& t);

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Pose inverse() const;
  Pose operator*(const Pose& other) const;

  /// Throws ArgumentError unless R^T R = I within 1e-9 and det(R) = +1.
  void validate() const;
  bool is_valid() const;
};

/// One timestamped scan; points are in the sensor frame.
struct PointCloudScan {
  double timestamp = 0.0;
  Pose sensor_pose;
  std::vector<Eigen::Vector3d> points;
  std::vector<SemanticClass> labels;  // empty, or one per point (simulator only)

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_labels() const { return !labels.empty(); }

  /// Finite coordinates, valid pose, label count consistent.
  void validate() const;
};

/// ASCII scan format:
///
///   # timestamp <t> pose <tx> <ty> <tz> <qw> <qx> <qy> <qz>
///   x y z label_id        (one line per point; label_id -1 when unlabeled)
void write_scan(std::ostream& out, const PointCloudScan& scan);
PointCloudScan read_scan(std::istream& in);
void save_scan(const std::filesystem::path& path, const PointCloudScan& scan);
PointCloudScan load_scan(const std::filesystem::path& path);

/// Corpus directory: scan_000000.txt ... plus manifest.json listing them.
void save_corpus(const std::filesystem::path& dir, const std::vector<PointCloudScan>& scans);
std::vector<PointCloudScan> load_corpus(const std::filesystem::path& dir);

}  // namespace rom

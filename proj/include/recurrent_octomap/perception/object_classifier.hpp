#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/neural/mlp.hpp"
#include "recurrent_octomap/neural/optimizer.hpp"
#include "recurrent_octomap/neural/weights_io.hpp"
#include "recurrent_octomap/perception/clustering.hpp"
#include "recurrent_octomap/perception/scan.hpp"

namespace rom {

/// Layer widths of the point network and the object network. The object
/// network gets a final linear layer to class logits on top of these; its
/// last hidden activation is the object feature.
struct PerceptionConfig {
  std::vector<std::size_t> point_widths{32, 32, 64};
  std::vector<std::size_t> object_widths{64, 32};
  std::size_t class_count = kClassCount;

  /// Full-size network: point 64-64-64-128-1024, object 512-256.
  static PerceptionConfig paper_scale();
};

struct PerceptionModel {
  MlpParams point_mlp;   // 3 -> point feature
  MlpParams object_mlp;  // pooled point feature -> ... -> object feature -> logits

  std::size_t point_feature_dim() const { return point_mlp.output_dim(); }
  std::size_t object_feature_dim() const;
  std::size_t class_count() const { return object_mlp.output_dim(); }
  void validate() const;

  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const PerceptionModel&) const = default;
};

PerceptionModel make_perception_model(const PerceptionConfig& config, Rng& rng);
PerceptionModel zeros_like(const PerceptionModel& model);

WeightFile to_weight_file(const PerceptionModel& model);
PerceptionModel perception_from_weight_file(const WeightFile& file);
void save_perception(const std::filesystem::path& path, const PerceptionModel& model);
PerceptionModel load_perception(const std::filesystem::path& path);

/// Member points expressed relative to the box: x and y centred on the box,
/// z measured from the box floor. One row per member.
Matrix box_local_points(std::span<const Eigen::Vector3d> points, const ObjectnessBox& box);

/// Per-point features and, once propagated, the object feature of the box
/// each point belongs to.
struct PointFeatureSet {
  Matrix point_features;  // N x point_feature_dim
  Matrix propagated;      // N x object_feature_dim (zero until propagated)
};

/// mlp_p applied to every row of `local_points` (N x 3).
PointFeatureSet extract_point_features(const MlpParams& point_mlp, const Matrix& local_points,
                                       std::size_t object_feature_dim = 0);

/// Runs the point network over a whole scan, each point expressed in the
/// local frame of its box (unclustered points in the frame of the virtual
/// background box).
PointFeatureSet extract_point_features(const PerceptionModel& model, const PointCloudScan& scan,
                                       std::span<const ObjectnessBox> boxes);

struct ObjectPrediction {
  Vector pooled;          // elementwise max over member point features
  Vector object_feature;  // last hidden activation of the object network
  Vector probs;           // softmax over classes
  std::size_t predicted = 0;
};

/// Objectness pooling followed by the object network.
ObjectPrediction classify_object(const MlpParams& object_mlp, const PointFeatureSet& features,
                                 const ObjectnessBox& box);

/// Classifies a standalone set of box-local points.
ObjectPrediction classify_local_points(const PerceptionModel& model, const Matrix& local_points);

/// Writes object_feature into the propagated row of every member point.
void propagate_to_points(std::span<const double> object_feature, const ObjectnessBox& box,
                         PointFeatureSet& features);

/// Full single-scan pipeline output.
struct ScanUnderstanding {
  std::vector<ObjectnessBox> boxes;
  std::vector<ObjectPrediction> objects;
  std::optional<ObjectnessBox> background_box;  // virtual box over unclustered points
  std::optional<ObjectPrediction> background;
  Matrix point_features;  // N x object_feature_dim, propagated
  Matrix point_probs;     // N x class_count, propagated softmax outputs
};

ScanUnderstanding understand_scan(const PerceptionModel& model, const PointCloudScan& scan,
                                  const ClusterConfig& clustering = {});

/// Rotates every point of the scan about the sensor z axis.
PointCloudScan rotate_yaw(const PointCloudScan& scan, double yaw);

struct PerceptionTrainConfig {
  std::size_t epochs = 20;
  OptimizerState optimizer{0.005, 0.95, 0, 0.0, {}};
  bool yaw_augmentation = true;
  std::uint64_t seed = 1;
  ClusterConfig clustering;
};

struct PerceptionTrainResult {
  PerceptionModel model;
  std::vector<double> epoch_loss;  // mean nll per object
};

/// Minimizes the summed object nll one scan at a time (every labeled cluster
/// of the scan contributes; the label is the majority of its point labels).
/// Each epoch visits the scans in a seeded random order and, when enabled,
/// applies a random yaw rotation to each scan.
PerceptionTrainResult train_perception(const std::vector<PointCloudScan>& corpus,
                                       const PerceptionConfig& config,
                                       const PerceptionTrainConfig& train,
                                       const PerceptionModel* initial = nullptr);

/// Fraction of labeled clusters whose predicted class matches the majority
/// label.
double object_accuracy(const PerceptionModel& model, const std::vector<PointCloudScan>& scans,
                       const ClusterConfig& clustering = {});

}  // namespace rom

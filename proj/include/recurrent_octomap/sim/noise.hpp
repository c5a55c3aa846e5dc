#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/map/voxel_map.hpp"
#include "recurrent_octomap/neural/matrix.hpp"
#include "recurrent_octomap/perception/object_classifier.hpp"
#include "recurrent_octomap/sim/scenario.hpp"

namespace rom {

/// Per-class stand-ins for what the perception network reports: the mean
/// object feature and mean softmax over objects of each true class.
struct ClassPrototypes {
  Matrix features;  // kClassCount x feature_dim
  Matrix probs;     // kClassCount x kClassCount

  std::size_t feature_dim() const { return features.cols(); }
  void validate() const;
  bool operator==(const ClassPrototypes&) const = default;
};

ClassPrototypes compute_prototypes(const PerceptionModel& model, const std::vector<PointCloudScan>& corpus,
                                   const ClusterConfig& clustering = {});

void save_prototypes(const std::filesystem::path& path, const ClassPrototypes& prototypes);
ClassPrototypes load_prototypes(const std::filesystem::path& path);

/// Throws ArgumentError unless every row is non-negative and sums to 1.
void validate_confusion(const ConfusionRows& confusion);

/// Inverse-CDF draw from one confusion row with the uniform variate u.
SemanticClass sample_confusion_row(const std::array<double, 4>& row, double u);

/// Resamples each object's class from the confusion row of its true class.
std::vector<SemanticClass> inject_observation_noise(std::span<const SemanticClass> true_classes,
                                                    const ConfusionRows& confusion, Rng& rng);

/// Observation payload for a cell whose points were reported as a mixture
/// of classes (`weights`, summing to 1): the weighted prototype feature plus
/// Gaussian jitter drawn from `jitter_key`, and the weighted prototype
/// softmax as the class likelihood.
struct ExpandedPayload {
  Vector feature;
  Vector likelihood;
};
ExpandedPayload expand_payload(const ClassPrototypes& prototypes, std::span<const double> weights,
                               double jitter, std::uint64_t jitter_key);

/// Stateless per (cell, frame) dropout decision.
bool cell_dropped(std::uint64_t seed, const CellKey& key, std::int64_t frame, double probability);

/// Hash of (seed, cell, frame) used to key per-observation randomness.
std::uint64_t observation_key(std::uint64_t seed, const CellKey& key, std::int64_t frame);

}  // namespace rom

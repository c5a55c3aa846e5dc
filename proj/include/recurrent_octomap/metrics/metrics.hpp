#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "recurrent_octomap/map/voxel_map.hpp"

namespace rom {

/// counts(i, j): voxels of true class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t class_count = kClassCount);

  std::size_t class_count() const { return n_; }
  std::uint64_t& at(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);

  std::uint64_t support(std::size_t truth) const;        // nt_i
  std::uint64_t predicted_count(std::size_t cls) const;  // sum_j n_ji
  std::uint64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// Adds one count per labelled ground-truth cell that is not DontCare. The
/// prediction is the argmax of the predicted cell's prob; ground-truth cells
/// the prediction lacks (or has not fused) count as Background. Throws
/// ArgumentError when the resolutions differ.
void accumulate(ConfusionMatrix& cm, const VoxelMap& predicted, const VoxelMap& ground_truth);

/// Classes with zero support are left out of the per-class means. All three
/// throw NumericError on an all-zero matrix.
double overall_accuracy(const ConfusionMatrix& cm);
double mean_accuracy(const ConfusionMatrix& cm);
double mean_iou(const ConfusionMatrix& cm);

struct MetricSummary {
  double overall_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_iou = 0.0;
};

MetricSummary summarize(const ConfusionMatrix& cm);

/// One line of a metrics report.
struct MetricRow {
  std::string day;  // "8".."14" or "mean"
  std::string backend;
  std::string mntd;
  MetricSummary metrics;
  ConfusionMatrix confusion;
};

/// CSV: day,backend,mntd,overall_accuracy,mean_accuracy,mean_iou
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
/// JSON array with the metrics and the full confusion matrix of every row.
std::string metrics_to_json(const std::vector<MetricRow>& rows);

}  // namespace rom

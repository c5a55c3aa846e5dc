#include "recurrent_octomap/metrics/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <ostream>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

ConfusionMatrix::ConfusionMatrix(std::size_t class_count)
    : n_(class_count), counts_(class_count * class_count, 0) {
  if (class_count == 0) throw ArgumentError("confusion matrix needs at least one class");
}

std::uint64_t& ConfusionMatrix::at(std::size_t truth, std::size_t predicted) {
  if (truth >= n_ || predicted >= n_) throw ArgumentError("confusion index out of range");
  return counts_[truth * n_ + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= n_ || predicted >= n_) throw ArgumentError("confusion index out of range");
  return counts_[truth * n_ + predicted];
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  at(truth, predicted) += count;
}

std::uint64_t ConfusionMatrix::support(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < n_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t cls) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += at(i, cls);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ArgumentError("adding confusion matrices of different sizes");
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const VoxelMap& predicted, const VoxelMap& ground_truth) {
  if (predicted.config().resolution != ground_truth.config().resolution) {
    throw ArgumentError("accumulate: prediction resolution " +
                        std::to_string(predicted.config().resolution) + " != ground truth " +
                        std::to_string(ground_truth.config().resolution));
  }
  for (const auto& [key, gt] : ground_truth.cells()) {
    if (!gt.gt_label || *gt.gt_label == SemanticClass::kDontCare) continue;
    const std::size_t truth = class_index(*gt.gt_label);
    std::size_t guess = class_index(SemanticClass::kBackground);
    const Cell* cell = predicted.find(key);
    if (cell && !cell->prob.empty()) {
      guess = static_cast<std::size_t>(std::max_element(cell->prob.begin(), cell->prob.end()) -
                                       cell->prob.begin());
    }
    cm.add(truth, guess);
  }
}

namespace {

void require_nonzero(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw NumericError("metrics undefined on an all-zero confusion matrix");
}

}  // namespace

double overall_accuracy(const ConfusionMatrix& cm) {
  require_nonzero(cm);
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < cm.class_count(); ++i) diag += cm.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double mean_accuracy(const ConfusionMatrix& cm) {
  require_nonzero(cm);
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t i = 0; i < cm.class_count(); ++i) {
    const auto nt = cm.support(i);
    if (nt == 0) continue;
    sum += static_cast<double>(cm.at(i, i)) / static_cast<double>(nt);
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

double mean_iou(const ConfusionMatrix& cm) {
  require_nonzero(cm);
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t i = 0; i < cm.class_count(); ++i) {
    const auto nt = cm.support(i);
    if (nt == 0) continue;
    const auto uni = nt + cm.predicted_count(i) - cm.at(i, i);
    sum += static_cast<double>(cm.at(i, i)) / static_cast<double>(uni);
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

MetricSummary summarize(const ConfusionMatrix& cm) {
  return {overall_accuracy(cm), mean_accuracy(cm), mean_iou(cm)};
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "day,backend,mntd,overall_accuracy,mean_accuracy,mean_iou\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f", r.metrics.overall_accuracy,
                  r.metrics.mean_accuracy, r.metrics.mean_iou);
    out << r.day << ',' << r.backend << ',' << r.mntd << ',' << buf << '\n';
  }
}

std::string metrics_to_json(const std::vector<MetricRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json cm = nlohmann::json::array();
    for (std::size_t i = 0; i < r.confusion.class_count(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < r.confusion.class_count(); ++j) row.push_back(r.confusion.at(i, j));
      cm.push_back(row);
    }
    arr.push_back({{"day", r.day},
                   {"backend", r.backend},
                   {"mntd", r.mntd},
                   {"overall_accuracy", r.metrics.overall_accuracy},
                   {"mean_accuracy", r.metrics.mean_accuracy},
                   {"mean_iou", r.metrics.mean_iou},
                   {"confusion", cm}});
  }
  return arr.dump(1);
}

}  // namespace rom

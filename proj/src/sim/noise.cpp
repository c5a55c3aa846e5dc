#include "recurrent_octomap/sim/noise.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

void ClassPrototypes::validate() const {
  if (features.rows() != kClassCount || features.cols() == 0) {
    throw ConfigError("prototypes: need one non-empty feature row per class");
  }
  if (probs.rows() != kClassCount || probs.cols() != kClassCount) {
    throw ConfigError("prototypes: need a class-probability row per class");
  }
  if (!features.all_finite() || !probs.all_finite()) throw ConfigError("prototypes: non-finite values");
}

ClassPrototypes compute_prototypes(const PerceptionModel& model, const std::vector<PointCloudScan>& corpus,
                                   const ClusterConfig& clustering) {
  ClassPrototypes p;
  p.features = Matrix(kClassCount, model.object_feature_dim());
  p.probs = Matrix(kClassCount, kClassCount);
  std::vector<std::size_t> counts(kClassCount, 0);
  for (const auto& scan : corpus) {
    if (!scan.has_labels()) throw ArgumentError("compute_prototypes: scan without labels");
    const auto u = understand_scan(model, scan, clustering);
    for (std::size_t k = 0; k < u.boxes.size(); ++k) {
      const auto c = class_index(majority_label(scan.labels, u.boxes[k].members));
      for (std::size_t d = 0; d < p.features.cols(); ++d) p.features(c, d) += u.objects[k].object_feature[d];
      for (std::size_t d = 0; d < kClassCount; ++d) p.probs(c, d) += u.objects[k].probs[d];
      ++counts[c];
    }
  }
  for (std::size_t c = 0; c < kClassCount; ++c) {
    if (counts[c] == 0) {
      throw ArgumentError("compute_prototypes: corpus has no " + std::string(to_string(class_from_index(c))) +
                          " objects");
    }
    for (double& v : p.features.row(c)) v /= static_cast<double>(counts[c]);
    for (double& v : p.probs.row(c)) v /= static_cast<double>(counts[c]);
  }
  return p;
}

void save_prototypes(const std::filesystem::path& path, const ClassPrototypes& prototypes) {
  auto rows = [](const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
    return out;
  };
  nlohmann::json j{{"features", rows(prototypes.features)}, {"probs", rows(prototypes.probs)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  // Full precision so reloaded prototypes reproduce bitwise.
  out << j.dump(1) << '\n';
}

ClassPrototypes load_prototypes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open prototypes file " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    auto matrix = [](const nlohmann::json& rows) {
      const auto v = rows.get<std::vector<std::vector<double>>>();
      Matrix m(v.size(), v.empty() ? 0 : v[0].size());
      for (std::size_t r = 0; r < v.size(); ++r) {
        if (v[r].size() != m.cols()) throw LoadError("prototypes: ragged rows");
        std::copy(v[r].begin(), v[r].end(), m.row(r).begin());
      }
      return m;
    };
    ClassPrototypes p{matrix(j.at("features")), matrix(j.at("probs"))};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void validate_confusion(const ConfusionRows& confusion) {
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    double sum = 0.0;
    for (double v : confusion[i]) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("confusion matrix has a negative or non-finite entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ArgumentError("confusion matrix row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

SemanticClass sample_confusion_row(const std::array<double, 4>& row, double u) {
  double acc = 0.0;
  std::size_t pick = kClassCount - 1;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    acc += row[c];
    if (u < acc) {
      pick = c;
      break;
    }
  }
  // Guard against rounding leaving u above the final cumulative sum.
  while (row[pick] == 0.0 && pick > 0) --pick;
  return class_from_index(pick);
}

std::vector<SemanticClass> inject_observation_noise(std::span<const SemanticClass> true_classes,
                                                    const ConfusionRows& confusion, Rng& rng) {
  validate_confusion(confusion);
  std::vector<SemanticClass> out;
  out.reserve(true_classes.size());
  for (SemanticClass t : true_classes) out.push_back(sample_confusion_row(confusion[class_index(t)], rng.uniform()));
  return out;
}

ExpandedPayload expand_payload(const ClassPrototypes& prototypes, std::span<const double> weights,
                               double jitter, std::uint64_t jitter_key) {
  if (weights.size() != kClassCount) throw ArgumentError("expand_payload: need one weight per class");
  ExpandedPayload p;
  p.feature.assign(prototypes.feature_dim(), 0.0);
  p.likelihood.assign(kClassCount, 0.0);
  for (std::size_t c = 0; c < kClassCount; ++c) {
    if (weights[c] == 0.0) continue;
    const auto f = prototypes.features.row(c);
    for (std::size_t d = 0; d < f.size(); ++d) p.feature[d] += weights[c] * f[d];
    const auto q = prototypes.probs.row(c);
    for (std::size_t d = 0; d < kClassCount; ++d) p.likelihood[d] += weights[c] * q[d];
  }
  if (jitter > 0.0) {
    // Counter-based Box-Muller: cheap and independent of evaluation order.
    constexpr double kTwoPi = 6.283185307179586;
    for (std::size_t d = 0; d < p.feature.size(); d += 2) {
      const double u1 = 1.0 - hash_to_unit(mix64(jitter_key + 2 * d + 1));
      const double u2 = hash_to_unit(mix64(jitter_key + 2 * d + 2));
      const double r = std::sqrt(-2.0 * std::log(u1));
      p.feature[d] += jitter * r * std::cos(kTwoPi * u2);
      if (d + 1 < p.feature.size()) p.feature[d + 1] += jitter * r * std::sin(kTwoPi * u2);
    }
  }
  return p;
}

std::uint64_t observation_key(std::uint64_t seed, const CellKey& key, std::int64_t frame) {
  std::uint64_t h = mix64(seed ^ 0x6f62736e6f697365ULL);
  h = mix64(h ^ static_cast<std::uint32_t>(key.ix));
  h = mix64(h ^ static_cast<std::uint32_t>(key.iy));
  h = mix64(h ^ static_cast<std::uint32_t>(key.iz));
  return mix64(h ^ static_cast<std::uint64_t>(frame));
}

bool cell_dropped(std::uint64_t seed, const CellKey& key, std::int64_t frame, double probability) {
  return hash_to_unit(mix64(observation_key(seed, key, frame) ^ 0x64726f70ULL)) < probability;
}

}  // namespace rom

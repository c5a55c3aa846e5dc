#include "recurrent_octomap/train/pipeline.hpp"

#include <cmath>
#include <string>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/sim/render.hpp"

namespace rom {
namespace {

enum : std::uint64_t { kObservationNoiseStream = 31 };

}  // namespace

std::string_view to_string(ObservationSource s) {
  return s == ObservationSource::kNoise ? "noise" : "perception";
}

ObservationSource parse_observation_source(std::string_view text) {
  if (text == "noise") return ObservationSource::kNoise;
  if (text == "perception") return ObservationSource::kPerception;
  throw ConfigError("unknown observation source '" + std::string(text) + "' (expected noise or perception)");
}

ObservationSettings ObservationSettings::noise(const ScenarioConfig& scenario,
                                               std::shared_ptr<const ClassPrototypes> prototypes) {
  ObservationSettings s;
  s.source = ObservationSource::kNoise;
  s.seed = scenario.seed;
  s.confusion = scenario.confusion;
  s.dropout = scenario.dropout;
  s.feature_jitter = scenario.feature_jitter;
  s.prototypes = std::move(prototypes);
  return s;
}

ObservationSettings ObservationSettings::from_perception(const ScenarioConfig& scenario,
                                                         std::shared_ptr<const PerceptionModel> model) {
  ObservationSettings s = noise(scenario, nullptr);
  s.source = ObservationSource::kPerception;
  s.perception = std::move(model);
  return s;
}

std::size_t ObservationSettings::raw_width() const {
  return source == ObservationSource::kNoise ? kClassCount : feature_dim() + kClassCount;
}

std::size_t ObservationSettings::feature_dim() const {
  if (source == ObservationSource::kNoise) {
    if (!prototypes) throw ConfigError("observation settings: noise source needs class prototypes");
    return prototypes->feature_dim();
  }
  if (!perception) throw ConfigError("observation settings: perception source needs a model");
  return perception->object_feature_dim();
}

void ObservationSettings::validate() const {
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("observation settings: dropout must be in [0, 1)");
  if (!(feature_jitter >= 0.0)) throw ConfigError("observation settings: feature_jitter must be >= 0");
  map.validate();
  clustering.validate();
  if (source == ObservationSource::kNoise) {
    try {
      validate_confusion(confusion);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("observation settings: ") + e.what());
    }
    if (!prototypes) throw ConfigError("observation settings: noise source needs class prototypes");
    prototypes->validate();
  } else {
    if (!perception) throw ConfigError("observation settings: perception source needs a model");
    perception->validate();
  }
}

ExpandedPayload ObservationSettings::expand(std::span<const double> raw, const CellKey& key,
                                            std::int64_t global_frame) const {
  if (raw.size() != raw_width()) throw ArgumentError("expand: raw observation has the wrong width");
  if (source == ObservationSource::kNoise) {
    return expand_payload(*prototypes, raw, feature_jitter, observation_key(seed, key, global_frame));
  }
  const std::size_t d = feature_dim();
  return {Vector(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(d)),
          Vector(raw.begin() + static_cast<std::ptrdiff_t>(d), raw.end())};
}

std::vector<CellObservation> ObservedFrame::insert_into(VoxelMap& map,
                                                        const ObservationSettings& settings) const {
  map.prune_expired(time);
  std::optional<Eigen::Vector3d> from;
  if (map.config().ray_updates) from = origin;
  auto obs = map.insert_scan(points, raw, nullptr, time, from);
  for (auto& o : obs) {
    auto e = settings.expand(o.feature, o.key, global_frame);
    o.feature = std::move(e.feature);
    o.likelihood = std::move(e.likelihood);
    map.find(o.key)->feature = o.feature;
  }
  return obs;
}

std::int64_t global_frame_index(const ScenarioConfig& config, std::size_t day, std::size_t frame) {
  return std::llround(config.frame_time(day, frame) * config.frame_rate);
}

Matrix observe_scan(const PointCloudScan& scan, const ObservationSettings& settings, std::size_t day,
                    std::size_t frame) {
  const std::size_t n = scan.points.size();
  if (settings.source == ObservationSource::kPerception) {
    const auto u = understand_scan(*settings.perception, scan, settings.clustering);
    const std::size_t d = u.point_features.cols();
    Matrix raw(n, d + kClassCount);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = raw.row(i);
      const auto f = u.point_features.row(i);
      const auto p = u.point_probs.row(i);
      std::copy(f.begin(), f.end(), row.begin());
      std::copy(p.begin(), p.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
    }
    return raw;
  }

  if (!scan.has_labels()) throw ArgumentError("observe_scan: noise observations need labelled scans");
  validate_confusion(settings.confusion);
  auto boxes = cluster_objectness(scan, settings.clustering);
  // Unclustered points form one more object, as in the perception pipeline.
  auto rest = unclustered_points(n, boxes);
  if (!rest.empty()) boxes.push_back(make_box(scan.points, std::move(rest)));
  // One variate per object: all of its points that share a true class are
  // reported as the same class, and a cluster that merged two objects still
  // corrupts each class from its own confusion row.
  Rng rng = Rng::derive(settings.seed, kObservationNoiseStream, day, frame);
  Matrix raw(n, kClassCount);
  for (const auto& box : boxes) {
    const double u = rng.uniform();
    for (std::size_t i : box.members) {
      const auto c = sample_confusion_row(settings.confusion[class_index(scan.labels[i])], u);
      raw(i, class_index(c)) = 1.0;
    }
  }
  return raw;
}

VoxelMap replay_day(const World& world, std::size_t day, const ObservationSettings& settings,
                    const std::function<void(const ObservedFrame&)>& on_frame) {
  if (day >= world.days.size()) throw ArgumentError("replay_day: day " + std::to_string(day) + " out of range");
  settings.validate();
  const VoxelMap keyer(settings.map);
  GroundTruthAccumulator gt(settings.map.resolution);
  for (std::size_t f = 0; f < world.config.frames_per_day; ++f) {
    const auto scan = render_scan(world, day, f);
    const auto pts = to_map_frame(scan);
    gt.add(pts, scan.labels);
    const Matrix raw = observe_scan(scan, settings, day, f);

    ObservedFrame out;
    out.day = day;
    out.frame = f;
    out.global_frame = global_frame_index(world.config, day, f);
    out.time = scan.timestamp;
    out.origin = scan.sensor_pose.translation;
    std::vector<std::size_t> kept;
    kept.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!cell_dropped(settings.seed, keyer.key_of(pts[i]), out.global_frame, settings.dropout)) kept.push_back(i);
    }
    out.points.reserve(kept.size());
    out.raw = Matrix(kept.size(), raw.cols());
    for (std::size_t j = 0; j < kept.size(); ++j) {
      out.points.push_back(pts[kept[j]]);
      const auto src = raw.row(kept[j]);
      std::copy(src.begin(), src.end(), out.raw.row(j).begin());
    }
    on_frame(out);
  }
  return gt.finish();
}

}  // namespace rom

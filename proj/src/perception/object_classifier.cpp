#include "recurrent_octomap/perception/object_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/neural/loss.hpp"

namespace rom {

PerceptionConfig PerceptionConfig::paper_scale() {
  PerceptionConfig c;
  c.point_widths = {64, 64, 64, 128, 1024};
  c.object_widths = {512, 256};
  return c;
}

std::size_t PerceptionModel::object_feature_dim() const {
  if (object_mlp.layers.size() < 2) return 0;
  return object_mlp.layers[object_mlp.layers.size() - 2].weight.rows();
}

void PerceptionModel::validate() const {
  point_mlp.validate();
  object_mlp.validate();
  if (point_mlp.layers.empty() || point_mlp.input_dim() != 3) {
    throw ConfigError("perception: point network must take 3 inputs");
  }
  if (object_mlp.layers.size() < 2) {
    throw ConfigError("perception: object network needs at least one hidden layer");
  }
  if (object_mlp.input_dim() != point_mlp.output_dim()) {
    throw ConfigError("perception: object network input " +
                      std::to_string(object_mlp.input_dim()) + " != point feature dim " +
                      std::to_string(point_mlp.output_dim()));
  }
}

std::vector<std::span<double>> PerceptionModel::tensors() {
  auto out = point_mlp.tensors();
  for (auto t : object_mlp.tensors()) out.push_back(t);
  return out;
}

std::vector<std::span<const double>> PerceptionModel::tensors() const {
  auto out = point_mlp.tensors();
  for (auto t : object_mlp.tensors()) out.push_back(t);
  return out;
}

PerceptionModel make_perception_model(const PerceptionConfig& config, Rng& rng) {
  if (config.point_widths.empty() || config.object_widths.empty() || config.class_count < 2) {
    throw ConfigError("perception: need point widths, object widths and >= 2 classes");
  }
  PerceptionModel m;
  m.point_mlp = make_mlp(3, config.point_widths, Activation::kRelu, Activation::kRelu, rng);
  std::vector<std::size_t> widths = config.object_widths;
  widths.push_back(config.class_count);
  m.object_mlp = make_mlp(config.point_widths.back(), widths, Activation::kRelu,
                          Activation::kIdentity, rng);
  m.validate();
  return m;
}

PerceptionModel zeros_like(const PerceptionModel& model) {
  return {zeros_like(model.point_mlp), zeros_like(model.object_mlp)};
}

WeightFile to_weight_file(const PerceptionModel& model) {
  model.validate();
  WeightFile file;
  file.kind = ModelKind::kPerception;
  file.class_count = static_cast<std::uint32_t>(model.class_count());
  file.dims = {static_cast<std::uint32_t>(model.point_mlp.layers.size()),
               static_cast<std::uint32_t>(model.object_mlp.layers.size())};
  for (const auto* mlp : {&model.point_mlp, &model.object_mlp}) {
    for (const auto& layer : mlp->layers) {
      file.tensors.push_back(layer.weight);
      Matrix b(1, layer.bias.size());
      std::copy(layer.bias.begin(), layer.bias.end(), b.values().begin());
      file.tensors.push_back(std::move(b));
    }
  }
  return file;
}

PerceptionModel perception_from_weight_file(const WeightFile& file) {
  if (file.kind != ModelKind::kPerception) {
    throw LoadError("weight file does not hold a perception model");
  }
  if (file.dims.size() != 2) throw LoadError("perception weight file: expected 2 dims");
  const std::size_t np = file.dims[0];
  const std::size_t no = file.dims[1];
  if (file.tensors.size() != 2 * (np + no)) {
    throw LoadError("perception weight file: expected " + std::to_string(2 * (np + no)) +
                    " tensors, found " + std::to_string(file.tensors.size()));
  }
  PerceptionModel m;
  std::size_t k = 0;
  auto take = [&](MlpParams& mlp, std::size_t n, bool linear_last) {
    for (std::size_t i = 0; i < n; ++i) {
      DenseLayer layer;
      layer.weight = file.tensors[k++];
      const auto& b = file.tensors[k++];
      layer.bias.assign(b.values().begin(), b.values().end());
      layer.activation =
          (linear_last && i + 1 == n) ? Activation::kIdentity : Activation::kRelu;
      mlp.layers.push_back(std::move(layer));
    }
  };
  take(m.point_mlp, np, false);
  take(m.object_mlp, no, true);
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("perception weight file: ") + e.what());
  }
  if (m.class_count() != file.class_count) {
    throw LoadError("perception weight file: class_count does not match decoder");
  }
  return m;
}

void save_perception(const std::filesystem::path& path, const PerceptionModel& model) {
  save_weight_file(path, to_weight_file(model));
}

PerceptionModel load_perception(const std::filesystem::path& path) {
  return perception_from_weight_file(load_weight_file(path));
}

Matrix box_local_points(std::span<const Eigen::Vector3d> points, const ObjectnessBox& box) {
  const double cx = 0.5 * (box.min.x() + box.max.x());
  const double cy = 0.5 * (box.min.y() + box.max.y());
  Matrix local(box.members.size(), 3);
  for (std::size_t r = 0; r < box.members.size(); ++r) {
    const auto& p = points[box.members[r]];
    local(r, 0) = p.x() - cx;
    local(r, 1) = p.y() - cy;
    local(r, 2) = p.z() - box.min.z();
  }
  return local;
}

PointFeatureSet extract_point_features(const MlpParams& point_mlp, const Matrix& local_points,
                                       std::size_t object_feature_dim) {
  if (local_points.cols() != 3) throw ArgumentError("point features need N x 3 input");
  PointFeatureSet out;
  out.point_features = mlp_forward(point_mlp, local_points);
  out.propagated = Matrix(local_points.rows(), object_feature_dim);
  return out;
}

namespace {

std::optional<ObjectnessBox> background_box_of(const PointCloudScan& scan,
                                               std::span<const ObjectnessBox> boxes) {
  auto rest = unclustered_points(scan.points.size(), boxes);
  if (rest.empty()) return std::nullopt;
  return make_box(scan.points, std::move(rest));
}

// Point features of a scan where each box (and the background box) is
// expressed in its own local frame.
PointFeatureSet scan_features(const PerceptionModel& model, const PointCloudScan& scan,
                              std::span<const ObjectnessBox> boxes,
                              const std::optional<ObjectnessBox>& background) {
  const std::size_t n = scan.points.size();
  Matrix local(n, 3);
  auto fill = [&](const ObjectnessBox& box) {
    const Matrix l = box_local_points(scan.points, box);
    for (std::size_t r = 0; r < box.members.size(); ++r)
      for (std::size_t c = 0; c < 3; ++c) local(box.members[r], c) = l(r, c);
  };
  for (const auto& b : boxes) fill(b);
  if (background) fill(*background);
  return extract_point_features(model.point_mlp, local, model.object_feature_dim());
}

ObjectPrediction run_object_mlp(const MlpParams& object_mlp, Vector pooled,
                                MlpCache* cache_out = nullptr) {
  Matrix in(1, pooled.size());
  std::copy(pooled.begin(), pooled.end(), in.values().begin());
  MlpCache local_cache;
  MlpCache& cache = cache_out ? *cache_out : local_cache;
  const Matrix logits = mlp_forward(object_mlp, in, &cache);
  ObjectPrediction p;
  p.pooled = std::move(pooled);
  const auto feat = cache.activations[cache.activations.size() - 2].row(0);
  p.object_feature.assign(feat.begin(), feat.end());
  p.probs = softmax(logits.row(0));
  p.predicted = static_cast<std::size_t>(
      std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  return p;
}

// Max-pool over the given rows; argmax[c] records which row won column c
// (first row on ties).
Vector max_pool(const Matrix& features, std::span<const std::size_t> rows,
                std::vector<std::size_t>* argmax = nullptr) {
  if (rows.empty()) throw ArgumentError("objectness pooling over an empty box");
  Vector pooled(features.cols(), -std::numeric_limits<double>::infinity());
  if (argmax) argmax->assign(features.cols(), rows.front());
  for (std::size_t r : rows) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] > pooled[c]) {
        pooled[c] = row[c];
        if (argmax) (*argmax)[c] = r;
      }
    }
  }
  return pooled;
}

}  // namespace

PointFeatureSet extract_point_features(const PerceptionModel& model, const PointCloudScan& scan,
                                       std::span<const ObjectnessBox> boxes) {
  return scan_features(model, scan, boxes, background_box_of(scan, boxes));
}

ObjectPrediction classify_object(const MlpParams& object_mlp, const PointFeatureSet& features,
                                 const ObjectnessBox& box) {
  return run_object_mlp(object_mlp, max_pool(features.point_features, box.members));
}

ObjectPrediction classify_local_points(const PerceptionModel& model, const Matrix& local_points) {
  const auto f = extract_point_features(model.point_mlp, local_points);
  std::vector<std::size_t> rows(local_points.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return run_object_mlp(model.object_mlp, max_pool(f.point_features, rows));
}

void propagate_to_points(std::span<const double> object_feature, const ObjectnessBox& box,
                         PointFeatureSet& features) {
  if (object_feature.size() != features.propagated.cols()) {
    throw ArgumentError("propagate_to_points: feature width mismatch");
  }
  for (std::size_t i : box.members) {
    std::copy(object_feature.begin(), object_feature.end(), features.propagated.row(i).begin());
  }
}

ScanUnderstanding understand_scan(const PerceptionModel& model, const PointCloudScan& scan,
                                  const ClusterConfig& clustering) {
  ScanUnderstanding u;
  u.boxes = cluster_objectness(scan, clustering);
  u.background_box = background_box_of(scan, u.boxes);
  auto features = scan_features(model, scan, u.boxes, u.background_box);
  u.point_probs = Matrix(scan.points.size(), model.class_count());
  auto assign = [&](const ObjectnessBox& box, const ObjectPrediction& pred) {
    propagate_to_points(pred.object_feature, box, features);
    for (std::size_t i : box.members)
      std::copy(pred.probs.begin(), pred.probs.end(), u.point_probs.row(i).begin());
  };
  for (const auto& box : u.boxes) {
    u.objects.push_back(classify_object(model.object_mlp, features, box));
    assign(box, u.objects.back());
  }
  if (u.background_box) {
    u.background = classify_object(model.object_mlp, features, *u.background_box);
    assign(*u.background_box, *u.background);
  }
  u.point_features = std::move(features.propagated);
  return u;
}

PointCloudScan rotate_yaw(const PointCloudScan& scan, double yaw) {
  PointCloudScan out = scan;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  for (auto& p : out.points) p = r * p;
  return out;
}

namespace {

// Summed nll over the labeled objects of one scan; accumulates gradients.
double scan_loss_and_grad(const PerceptionModel& model, const PointCloudScan& scan,
                          const ClusterConfig& clustering, PerceptionModel& grads,
                          std::size_t& object_count) {
  auto boxes = cluster_objectness(scan, clustering);
  if (auto bg = background_box_of(scan, boxes)) boxes.push_back(std::move(*bg));
  double loss = 0.0;
  for (const auto& box : boxes) {
    const std::size_t label = class_index(majority_label(scan.labels, box.members));
    const Matrix local = box_local_points(scan.points, box);
    MlpCache point_cache;
    const Matrix feats = mlp_forward(model.point_mlp, local, &point_cache);
    std::vector<std::size_t> rows(local.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::vector<std::size_t> argmax;
    Vector pooled = max_pool(feats, rows, &argmax);
    MlpCache object_cache;
    const auto pred = run_object_mlp(model.object_mlp, std::move(pooled), &object_cache);
    loss += nll_loss(pred.probs, label);
    const Vector g = nll_softmax_grad(pred.probs, label);
    Matrix g_logits(1, g.size());
    std::copy(g.begin(), g.end(), g_logits.values().begin());
    const Matrix g_pooled = mlp_backward(model.object_mlp, object_cache, g_logits, grads.object_mlp);
    Matrix g_feats(feats.rows(), feats.cols());
    for (std::size_t c = 0; c < feats.cols(); ++c) g_feats(argmax[c], c) = g_pooled(0, c);
    mlp_backward(model.point_mlp, point_cache, g_feats, grads.point_mlp);
    ++object_count;
  }
  return loss;
}

}  // namespace

PerceptionTrainResult train_perception(const std::vector<PointCloudScan>& corpus,
                                       const PerceptionConfig& config,
                                       const PerceptionTrainConfig& train,
                                       const PerceptionModel* initial) {
  if (corpus.empty()) throw ArgumentError("train_perception: empty corpus");
  for (const auto& scan : corpus) {
    if (!scan.has_labels()) throw ArgumentError("train_perception: corpus scan without labels");
    scan.validate();
  }
  PerceptionTrainResult result;
  if (initial) {
    result.model = *initial;
    result.model.validate();
  } else {
    Rng init_rng = Rng::derive(train.seed, 0x5045524345505449ULL);
    result.model = make_perception_model(config, init_rng);
  }
  OptimizerState opt = train.optimizer;
  const double two_pi = 2.0 * std::acos(-1.0);
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    Rng rng = Rng::derive(train.seed, 1, epoch);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    std::size_t objects = 0;
    for (std::size_t idx : order) {
      const double yaw = train.yaw_augmentation ? rng.uniform(0.0, two_pi) : 0.0;
      const PointCloudScan scan =
          train.yaw_augmentation ? rotate_yaw(corpus[idx], yaw) : corpus[idx];
      PerceptionModel grads = zeros_like(result.model);
      std::size_t count = 0;
      const double loss = scan_loss_and_grad(result.model, scan, train.clustering, grads, count);
      if (!std::isfinite(loss)) {
        throw NumericError("perception training: non-finite loss in epoch " +
                           std::to_string(epoch) + " on scan " + std::to_string(idx));
      }
      total += loss;
      objects += count;
      if (count > 0) optimizer_step(opt, result.model, grads);
    }
    result.epoch_loss.push_back(objects ? total / static_cast<double>(objects) : 0.0);
    opt.next_epoch();
  }
  return result;
}

double object_accuracy(const PerceptionModel& model, const std::vector<PointCloudScan>& scans,
                       const ClusterConfig& clustering) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& scan : scans) {
    if (!scan.has_labels()) throw ArgumentError("object_accuracy: scan without labels");
    const auto u = understand_scan(model, scan, clustering);
    for (std::size_t k = 0; k < u.boxes.size(); ++k) {
      const auto truth = class_index(majority_label(scan.labels, u.boxes[k].members));
      correct += u.objects[k].predicted == truth;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace rom

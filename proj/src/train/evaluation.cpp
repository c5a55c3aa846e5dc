#include "recurrent_octomap/train/evaluation.hpp"

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/parallel.hpp"

namespace rom {

std::vector<Mntd> mntd_sweep_grid() {
  return {Mntd::of_frames(1),   Mntd::of_frames(10),   Mntd::of_frames(100), Mntd::of_frames(200),
          Mntd::of_frames(500), Mntd::of_frames(1000), Mntd::one_day()};
}

FusionBackend with_clock(FusionBackend backend, const ScenarioConfig& scenario) {
  backend.frame_rate = scenario.frame_rate;
  backend.day_period = scenario.day_period;
  return backend;
}

std::vector<FusionBackend> comparison_backends(std::shared_ptr<const LstmParams> params,
                                               const ScenarioConfig& scenario) {
  return {with_clock(FusionBackend::bayesian(), scenario),
          with_clock(FusionBackend::standard_lstm(params), scenario),
          with_clock(FusionBackend::nap_lstm(params, Mntd::one_day()), scenario)};
}

std::vector<FusionBackend> sweep_backends(std::shared_ptr<const LstmParams> params,
                                          const ScenarioConfig& scenario) {
  std::vector<FusionBackend> out;
  for (const auto& m : mntd_sweep_grid()) out.push_back(with_clock(FusionBackend::nap_lstm(params, m), scenario));
  return out;
}

std::string mntd_label(const FusionBackend& backend) {
  return backend.recurrent() ? backend.effective_mntd().to_string() : "-";
}

const MetricRow& EvaluationReport::mean(std::size_t index) const {
  if (index >= backend_count) throw ArgumentError("EvaluationReport::mean: backend index out of range");
  return rows[rows.size() - backend_count + index];
}

EvaluationReport evaluate(const World& world, std::span<const std::size_t> days,
                          const ObservationSettings& settings, std::span<const FusionBackend> backends,
                          const EvaluationOptions& options) {
  if (backends.empty()) throw ArgumentError("evaluate: no backends");
  for (const auto& b : backends) {
    b.validate();
    if (b.recurrent() && b.params->input_dim != settings.feature_dim()) {
      throw ConfigError("evaluate: model input width " + std::to_string(b.params->input_dim) +
                        " does not match the observation feature width " +
                        std::to_string(settings.feature_dim()));
    }
  }
  settings.validate();
  for (std::size_t d : days) {
    if (d >= world.days.size()) throw ArgumentError("evaluate: day " + std::to_string(d + 1) + " not simulated");
  }

  const std::size_t nb = backends.size();
  std::vector<std::vector<ConfusionMatrix>> confusion(days.size(), std::vector<ConfusionMatrix>(nb));
  parallel_for(
      days.size(),
      [&](std::size_t di) {
        std::vector<VoxelMap> maps(nb, VoxelMap(settings.map));
        const VoxelMap gt = replay_day(world, days[di], settings, [&](const ObservedFrame& f) {
          const auto reference = f.insert_into(maps[0], settings);
          for (std::size_t b = 0; b < nb; ++b) {
            std::vector<CellObservation> obs;
            if (b == 0) {
              obs = reference;
            } else {
              maps[b].prune_expired(f.time);
              obs = maps[b].insert_scan(f.points, f.raw, nullptr, f.time);
              for (std::size_t i = 0; i < obs.size(); ++i) {
                obs[i].feature = reference[i].feature;
                obs[i].likelihood = reference[i].likelihood;
                maps[b].find(obs[i].key)->feature = obs[i].feature;
              }
            }
            fuse_observations(maps[b], obs, backends[b], 1);
          }
        });
        for (std::size_t b = 0; b < nb; ++b) {
          accumulate(confusion[di][b], maps[b], gt);
          if (options.on_day_map) options.on_day_map(days[di], b, maps[b], gt);
        }
      },
      options.threads);

  EvaluationReport report;
  report.backend_count = nb;
  std::vector<MetricRow> means(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    means[b].day = "mean";
    means[b].backend = std::string(to_string(backends[b].kind));
    means[b].mntd = mntd_label(backends[b]);
  }
  for (std::size_t di = 0; di < days.size(); ++di) {
    for (std::size_t b = 0; b < nb; ++b) {
      MetricRow row{std::to_string(days[di] + 1), means[b].backend, means[b].mntd, summarize(confusion[di][b]),
                    confusion[di][b]};
      means[b].metrics.overall_accuracy += row.metrics.overall_accuracy / static_cast<double>(days.size());
      means[b].metrics.mean_accuracy += row.metrics.mean_accuracy / static_cast<double>(days.size());
      means[b].metrics.mean_iou += row.metrics.mean_iou / static_cast<double>(days.size());
      means[b].confusion += row.confusion;
      report.rows.push_back(std::move(row));
    }
  }
  report.rows.insert(report.rows.end(), means.begin(), means.end());
  return report;
}

}  // namespace rom

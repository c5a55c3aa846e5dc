#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "recurrent_octomap/fusion/fusion.hpp"
#include "recurrent_octomap/metrics/metrics.hpp"
#include "recurrent_octomap/train/pipeline.hpp"

namespace rom {

/// The MNTD values of the sweep: 1, 10, 100, 200, 500 and 1000 frames, then
/// one day.
std::vector<Mntd> mntd_sweep_grid();

/// Bayesian update, StandardLSTM and NapLSTM(one day) sharing `params`.
std::vector<FusionBackend> comparison_backends(std::shared_ptr<const LstmParams> params,
                                               const ScenarioConfig& scenario);
/// NapLSTM at every MNTD of the sweep grid.
std::vector<FusionBackend> sweep_backends(std::shared_ptr<const LstmParams> params,
                                          const ScenarioConfig& scenario);
/// Sets the frame clock of a backend from the scenario.
FusionBackend with_clock(FusionBackend backend, const ScenarioConfig& scenario);

/// Name used in reports: "-" for the Bayesian backend, otherwise the
/// effective MNTD.
std::string mntd_label(const FusionBackend& backend);

struct EvaluationOptions {
  std::size_t threads = 0;  // days evaluated in parallel; 0: process default
  /// Called once per (day, backend) with the final map and ground truth.
  std::function<void(std::size_t day, std::size_t backend, const VoxelMap& map, const VoxelMap& gt)>
      on_day_map;
};

struct EvaluationReport {
  std::vector<MetricRow> rows;  // per day (all backends), then one mean row per backend

  /// Mean row of backend `index` (in the order they were passed).
  const MetricRow& mean(std::size_t index) const;
  std::size_t backend_count = 0;
};

/// Replays each test day once, feeding identical observations to one map
/// per backend, and scores the final map of every backend against the
/// day's ground truth. Mean rows average the per-day metrics and sum the
/// confusion matrices. Days are printed 1-based.
EvaluationReport evaluate(const World& world, std::span<const std::size_t> days,
                          const ObservationSettings& settings, std::span<const FusionBackend> backends,
                          const EvaluationOptions& options = {});

}  // namespace rom

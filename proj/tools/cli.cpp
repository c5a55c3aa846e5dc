#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/parallel.hpp"
#include "recurrent_octomap/neural/weights_io.hpp"
#include "recurrent_octomap/sim/render.hpp"
#include "recurrent_octomap/train/evaluation.hpp"
#include "recurrent_octomap/train/trainer.hpp"

#ifndef ROM_VERSION
#define ROM_VERSION "0.0.0"
#endif

namespace rom::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kManifestName = "run_manifest.json";

enum class Profile { kSmoke, kDesk, kPaper };

Profile parse_profile(const std::string& s) {
  if (s == "smoke") return Profile::kSmoke;
  if (s == "desk") return Profile::kDesk;
  if (s == "paper") return Profile::kPaper;
  throw ConfigError("unknown profile '" + s + "' (expected smoke, desk or paper)");
}

// Built-in defaults per profile, as JSON patches over the library defaults.

json profile_scenario(Profile p) {
  if (p == Profile::kSmoke) return {{"days", 2}, {"frames_per_day", 100}, {"point_budget", 800}};
  return json::object();
}

json profile_perception(Profile p) {
  switch (p) {
    case Profile::kSmoke:
      return {{"corpus_size", 60}, {"epochs", 2}, {"point_widths", {8, 8, 16}}, {"object_widths", {16, 8}}};
    case Profile::kDesk:
      return json::object();
    case Profile::kPaper: {
      const auto pc = PerceptionConfig::paper_scale();
      return {{"point_widths", pc.point_widths}, {"object_widths", pc.object_widths}};
    }
  }
  return json::object();
}

json profile_fusion(Profile p) {
  switch (p) {
    case Profile::kSmoke:
      return {{"hidden_dim", 8}, {"layers", 1},       {"epochs", 2},       {"batch_size", 8},
              {"sequence_cap", 50}, {"truncation", 50}, {"batches_per_epoch", 10}};
    case Profile::kDesk:
      return {{"epochs", 30}, {"batches_per_epoch", 400}, {"learning_rate", 0.003}};
    case Profile::kPaper:
      return json::object();
  }
  return json::object();
}

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw LoadError(what + " " + path.string() + " not found");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(what + " " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
  if (!out) throw LoadError("write failed: " + path.string());
}

// Perception run settings. Lives here because only the CLI builds corpora.
struct PerceptionRun {
  std::size_t corpus_size = 400;
  std::uint64_t corpus_seed = 7;
  double holdout_fraction = 0.2;
  std::size_t epochs = 20;
  double learning_rate = 0.005;
  double decay = 0.95;
  bool yaw_augmentation = true;
  std::uint64_t seed = 1;
  std::vector<std::size_t> point_widths = PerceptionConfig{}.point_widths;
  std::vector<std::size_t> object_widths = PerceptionConfig{}.object_widths;

  json to_json() const {
    return {{"corpus_size", corpus_size},     {"corpus_seed", corpus_seed},
            {"holdout_fraction", holdout_fraction}, {"epochs", epochs},
            {"learning_rate", learning_rate}, {"decay", decay},
            {"yaw_augmentation", yaw_augmentation}, {"seed", seed},
            {"point_widths", point_widths},   {"object_widths", object_widths}};
  }

  static PerceptionRun from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("perception config: expected a JSON object");
    PerceptionRun r;
    for (const auto& [name, v] : j.items()) {
      try {
        if (name == "corpus_size") r.corpus_size = v.get<std::size_t>();
        else if (name == "corpus_seed") r.corpus_seed = v.get<std::uint64_t>();
        else if (name == "holdout_fraction") r.holdout_fraction = v.get<double>();
        else if (name == "epochs") r.epochs = v.get<std::size_t>();
        else if (name == "learning_rate") r.learning_rate = v.get<double>();
        else if (name == "decay") r.decay = v.get<double>();
        else if (name == "yaw_augmentation") r.yaw_augmentation = v.get<bool>();
        else if (name == "seed") r.seed = v.get<std::uint64_t>();
        else if (name == "point_widths") r.point_widths = v.get<std::vector<std::size_t>>();
        else if (name == "object_widths") r.object_widths = v.get<std::vector<std::size_t>>();
        else throw ConfigError("perception config: unknown field '" + name + "'");
      } catch (const json::exception&) {
        throw ConfigError("perception config: field '" + name + "' has the wrong type");
      }
    }
    r.validate();
    return r;
  }

  void validate() const {
    auto fail = [](const char* field, const char* why) {
      throw ConfigError(std::string("perception config: ") + field + " " + why);
    };
    if (corpus_size < 2) fail("corpus_size", "must be at least 2");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) fail("holdout_fraction", "must be in (0, 1)");
    if (epochs == 0) fail("epochs", "must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) fail("decay", "must be in (0, 1]");
    if (point_widths.empty() || object_widths.empty()) fail("point_widths", "and object_widths need at least one layer");
    for (auto w : point_widths) if (w == 0) fail("point_widths", "must be positive");
    for (auto w : object_widths) if (w == 0) fail("object_widths", "must be positive");
  }
};

// Profile default, then the config file as a merge patch, then flags.
json layered(json base, const json& profile, const std::string& file, const std::string& what) {
  base.merge_patch(profile);
  if (!file.empty()) {
    const json patch = read_json_file(file, what);
    if (!patch.is_object()) throw ConfigError(what + " " + file + ": expected a JSON object");
    base.merge_patch(patch);
  }
  return base;
}

struct Common {
  std::string out;
  std::string profile = "desk";
  std::size_t jobs = 0;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool seed) {
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--profile", c.profile, "smoke, desk or paper")
      ->check(CLI::IsMember({"smoke", "desk", "paper"}));
  cmd->add_option("--jobs", c.jobs, "Worker threads (RECURRENT_OCTOMAP_THREADS overrides)");
  cmd->add_flag("--force", c.force, "Replace the outputs of an earlier run");
  if (seed) cmd->add_option("--seed", c.seed, "Seed override");
}

// Tracks outputs and writes the manifest last.
class Run {
 public:
  Run(std::string command, const Common& common, std::vector<std::string> argv)
      : command_(std::move(command)), common_(common), argv_(std::move(argv)), start_(Clock::now()) {
    dir_ = common.out;
    prepare_output_dir();
    set_default_thread_count(resolve_thread_count(common.jobs));
  }

  const fs::path& dir() const { return dir_; }
  fs::path output(const std::string& relative) {
    outputs_.push_back(relative);
    return dir_ / relative;
  }
  void config_path(const std::string& key, const std::string& path) {
    if (!path.empty()) config_paths_[key] = fs::absolute(path).lexically_normal().string();
  }
  void effective(json config) { effective_ = std::move(config); }
  void seed(std::uint64_t s) { seed_ = s; }

  void finish() {
    for (const auto& o : outputs_) {
      if (!fs::exists(dir_ / o)) throw InternalError("declared output " + o + " was not written");
    }
    std::sort(outputs_.begin(), outputs_.end());
    const double seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    json m;
    m["command"] = command_;
    m["argv"] = argv_;
    m["config_paths"] = config_paths_;
    m["seed"] = seed_;
    m["profile"] = common_.profile;
    m["threads"] = default_thread_count();
    m["outputs"] = outputs_;
    m["tool_version"] = ROM_VERSION;
    m["duration_seconds"] = seconds;
    m["effective_config"] = effective_;
    write_text(dir_ / kManifestName, m.dump(2) + "\n");
    std::cerr << "[" << command_ << "] done in " << seconds << " s, outputs in " << dir_.string() << "\n";
  }

 private:
  void prepare_output_dir() {
    if (fs::exists(dir_) && !fs::is_directory(dir_)) {
      throw LoadError("--out " + dir_.string() + " exists and is not a directory");
    }
    if (fs::exists(dir_) && !fs::is_empty(dir_)) {
      if (!common_.force) {
        throw LoadError("refusing to overwrite non-empty " + dir_.string() + " (pass --force to replace it)");
      }
      // Only remove what an earlier run of this tool declared.
      const fs::path manifest = dir_ / kManifestName;
      if (fs::exists(manifest)) {
        const json old = read_json_file(manifest, "run manifest");
        for (const auto& o : old.value("outputs", json::array())) fs::remove_all(dir_ / o.get<std::string>());
        fs::remove(manifest);
      }
    }
    fs::create_directories(dir_);
  }

  std::string command_;
  Common common_;
  std::vector<std::string> argv_;
  Clock::time_point start_;
  fs::path dir_;
  std::vector<std::string> outputs_;
  json config_paths_ = json::object();
  json effective_ = json::object();
  std::uint64_t seed_ = 0;
};

std::string day_name(std::size_t day) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "day_%02zu", day + 1);
  return buf;
}

ScenarioConfig load_data_scenario(const fs::path& data) {
  const fs::path p = data / "scenario.json";
  if (!fs::exists(p)) {
    throw LoadError("no scenario.json in " + data.string() +
                    " (create a dataset first: recurrent_octomap simulate --out " + data.string() + ")");
  }
  return load_scenario(p);
}

std::vector<std::size_t> train_days(const ScenarioConfig& s) {
  std::vector<std::size_t> d;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, s.days / 2); ++i) d.push_back(i);
  return d;
}

std::vector<std::size_t> test_days(const ScenarioConfig& s) {
  std::vector<std::size_t> d;
  for (std::size_t i = s.days / 2; i < s.days; ++i) d.push_back(i);
  return d;
}

// Observation settings for the noise or perception source. Without a
// perception directory only the Bayesian backend can run, with the reported
// classes taken as exact one-hot likelihoods.
ObservationSettings observation_settings(const ScenarioConfig& scenario, const std::string& source,
                                         const std::string& perception_dir, bool allow_ideal) {
  const auto src = parse_observation_source(source);
  const auto hint = [](const fs::path& p) {
    return " (train one first: recurrent_octomap train-perception --out " + p.parent_path().string() + ")";
  };
  if (src == ObservationSource::kPerception) {
    if (perception_dir.empty()) throw ConfigError("--source perception needs --perception DIR");
    const fs::path p = fs::path(perception_dir) / "perception.rwt";
    if (!fs::exists(p)) throw LoadError("missing " + p.string() + hint(p));
    return ObservationSettings::from_perception(scenario,
                                                std::make_shared<const PerceptionModel>(load_perception(p)));
  }
  if (perception_dir.empty()) {
    if (!allow_ideal) throw ConfigError("--perception DIR is required (class prototypes come from it)");
    ClassPrototypes ideal;
    ideal.features = Matrix(kClassCount, 1);
    ideal.probs = Matrix(kClassCount, kClassCount);
    for (std::size_t c = 0; c < kClassCount; ++c) ideal.probs(c, c) = 1.0;
    return ObservationSettings::noise(scenario, std::make_shared<const ClassPrototypes>(ideal));
  }
  const fs::path p = fs::path(perception_dir) / "prototypes.json";
  if (!fs::exists(p)) throw LoadError("missing " + p.string() + hint(p));
  return ObservationSettings::noise(scenario, std::make_shared<const ClassPrototypes>(load_prototypes(p)));
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common common;
  std::string scenario;
  std::optional<std::size_t> days;
  bool no_scans = false;
};

void cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  json cfg = layered(json::parse(scenario_to_json(ScenarioConfig{})), profile_scenario(parse_profile(a.common.profile)),
                     a.scenario, "scenario file");
  if (a.common.seed) cfg["seed"] = *a.common.seed;
  if (a.days) cfg["days"] = *a.days;
  const ScenarioConfig scenario = scenario_from_json(cfg.dump());
  scenario.validate();

  Run run("simulate", a.common, argv);
  run.config_path("scenario", a.scenario);
  run.seed(scenario.seed);
  run.effective(json::parse(scenario_to_json(scenario)));

  save_scenario(run.output("scenario.json"), scenario);
  const World world = generate_world(scenario);
  fs::create_directories(run.dir() / "gt");
  for (std::size_t d = 0; d < scenario.days; ++d) {
    std::cerr << "[simulate] " << day_name(d) << "\n";
    if (!a.no_scans) {
      std::vector<PointCloudScan> scans(scenario.frames_per_day);
      parallel_for(scans.size(), [&](std::size_t f) { scans[f] = render_scan(world, d, f); });
      save_corpus(run.output(day_name(d)), scans);
    }
    save_map(run.output("gt/" + day_name(d) + ".rcmap"), build_ground_truth(world, d));
  }
  run.finish();
}

// ------------------------------------------------------- train-perception

struct PerceptionArgs {
  Common common;
  std::string config;
  std::string data;
  std::optional<std::size_t> epochs;
};

void cmd_train_perception(const PerceptionArgs& a, const std::vector<std::string>& argv) {
  json cfg = layered(PerceptionRun{}.to_json(), profile_perception(parse_profile(a.common.profile)), a.config,
                     "perception config");
  if (a.common.seed) cfg["seed"] = *a.common.seed;
  if (a.epochs) cfg["epochs"] = *a.epochs;
  const PerceptionRun pr = PerceptionRun::from_json(cfg);

  std::vector<PointCloudScan> corpus;
  if (!a.data.empty()) {
    if (!fs::exists(fs::path(a.data) / "manifest.json")) {
      throw LoadError("no scan corpus at " + a.data + " (expected manifest.json; omit --data to use the built-in shapes corpus)");
    }
    corpus = load_corpus(a.data);
  }

  Run run("train-perception", a.common, argv);
  run.config_path("config", a.config);
  run.config_path("data", a.data);
  run.seed(pr.seed);
  run.effective(pr.to_json());

  if (corpus.empty()) corpus = generate_shapes_corpus(pr.corpus_seed, pr.corpus_size);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(pr.holdout_fraction * corpus.size()));
  if (n_test >= corpus.size()) throw ConfigError("perception config: holdout_fraction leaves no training scans");
  const std::vector<PointCloudScan> train(corpus.begin(), corpus.end() - static_cast<std::ptrdiff_t>(n_test));
  const std::vector<PointCloudScan> test(corpus.end() - static_cast<std::ptrdiff_t>(n_test), corpus.end());

  PerceptionConfig net;
  net.point_widths = pr.point_widths;
  net.object_widths = pr.object_widths;
  PerceptionTrainConfig tc;
  tc.epochs = pr.epochs;
  tc.optimizer.base_learning_rate = pr.learning_rate;
  tc.optimizer.decay = pr.decay;
  tc.yaw_augmentation = pr.yaw_augmentation;
  tc.seed = pr.seed;
  std::cerr << "[train-perception] " << train.size() << " training scans, " << test.size() << " held out\n";
  const auto result = train_perception(train, net, tc);

  save_perception(run.output("perception.rwt"), result.model);
  save_prototypes(run.output("prototypes.json"), compute_prototypes(result.model, corpus));
  {
    std::ostringstream csv;
    csv << "epoch,mean_loss\n";
    char line[64];
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      std::snprintf(line, sizeof line, "%zu,%.9g\n", e + 1, result.epoch_loss[e]);
      csv << line;
    }
    write_text(run.output("perception_loss.csv"), csv.str());
  }
  const double train_acc = object_accuracy(result.model, train);
  const double test_acc = object_accuracy(result.model, test);
  json metrics = {{"train_object_accuracy", train_acc},
                  {"test_object_accuracy", test_acc},
                  {"train_scans", train.size()},
                  {"test_scans", test.size()}};
  write_text(run.output("perception_metrics.json"), metrics.dump(2) + "\n");
  std::cout << "object accuracy: train " << train_acc << ", held out " << test_acc << "\n";
  run.finish();
}

// ------------------------------------------------------------ train-fusion

struct FusionArgs {
  Common common;
  std::string data;
  std::string perception;
  std::string source = "noise";
  std::string config;
  std::string resume;
  std::optional<std::size_t> epochs;
};

void cmd_train_fusion(const FusionArgs& a, const std::vector<std::string>& argv) {
  json cfg = layered(json::parse(train_config_to_json(TrainConfig{})), profile_fusion(parse_profile(a.common.profile)),
                     a.config, "train config");
  if (a.common.seed) cfg["seed"] = *a.common.seed;
  if (a.epochs) cfg["epochs"] = *a.epochs;
  const TrainConfig tc = train_config_from_json(cfg.dump());
  tc.validate();

  const ScenarioConfig scenario = load_data_scenario(a.data);
  const ObservationSettings settings = observation_settings(scenario, a.source, a.perception, false);
  settings.validate();

  std::optional<FusionCheckpoint> resume;
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw LoadError("--resume: " + a.resume + " not found");
    resume = load_checkpoint(a.resume);
  }

  Run run("train-fusion", a.common, argv);
  run.config_path("data", a.data);
  run.config_path("perception", a.perception);
  run.config_path("config", a.config);
  run.config_path("resume", a.resume);
  run.seed(tc.seed);
  json eff = json::parse(train_config_to_json(tc));
  eff["observation_source"] = a.source;
  run.effective(eff);

  const World world = generate_world(scenario);
  const auto days = train_days(scenario);
  std::cerr << "[train-fusion] collecting sequences from " << days.size() << " day(s)\n";
  const SequenceSet set = collect_sequences(world, days, settings);
  std::cerr << "[train-fusion] " << set.sequences.size() << " cells, " << set.total_steps() << " steps\n";
  if (set.sequences.empty()) throw ConfigError("train-fusion: the training days produced no labelled cells");

  const fs::path model = run.output("fusion.rwt");
  run.output(checkpoint_sidecar("fusion.rwt").string());
  TrainHooks hooks;
  // A checkpoint after every epoch, so an interrupted run can resume.
  hooks.on_epoch = [&](const FusionTrainResult& r) {
    std::fprintf(stderr, "[train-fusion] epoch %zu loss %.6f\n", r.epoch_loss.size(), r.epoch_loss.back());
    save_checkpoint(model, r.checkpoint(), tc);
  };
  const auto result = train_fusion(set, settings, tc, scenario.frame_rate, resume ? &*resume : nullptr, hooks);
  save_checkpoint(model, result.checkpoint(), tc);
  {
    std::ostringstream csv;
    write_loss_csv(csv, result);
    write_text(run.output("fusion_loss.csv"), csv.str());
  }
  write_text(run.output("train_config.json"), train_config_to_json(tc) + "\n");
  run.finish();
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  Common common;
  std::string data;
  std::string model;
  std::string perception;
  std::string source = "noise";
  std::string backend = "naplstm";
  std::optional<std::string> mntd;
  bool compare = false;
  bool sweep = false;
  bool save_maps = false;
};

std::shared_ptr<const LstmParams> load_fusion_model(const std::string& path, const std::string& why) {
  if (path.empty()) throw ConfigError(why + " needs a fusion model (--model fusion.rwt)");
  if (!fs::exists(path)) throw LoadError("--model: " + path + " not found (train one with recurrent_octomap train-fusion)");
  const WeightFile wf = load_weight_file(path);
  if (wf.kind != ModelKind::kLstm) throw ConfigError("--model " + path + " is not a fusion LSTM model");
  return std::make_shared<const LstmParams>(lstm_from_weight_file(wf));
}

std::string method_name(const FusionBackend& b) {
  std::string name(to_string(b.kind));
  if (b.kind == BackendKind::kNapLstm) name += "(" + b.mntd.to_string() + ")";
  return name;
}

// Rows: metric x method; columns: the test days, then the mean.
std::string comparison_table(const EvaluationReport& report, std::span<const FusionBackend> backends,
                             std::size_t first, std::size_t count) {
  std::vector<std::string> day_labels;
  for (const auto& row : report.rows) {
    if (row.day == "mean") break;
    if (std::find(day_labels.begin(), day_labels.end(), row.day) == day_labels.end()) day_labels.push_back(row.day);
  }
  std::ostringstream out;
  out << "metric,method";
  for (const auto& d : day_labels) out << ",day" << d;
  out << ",mean\n";
  const char* names[] = {"overall_accuracy", "mean_accuracy", "mean_iou"};
  char buf[32];
  for (int m = 0; m < 3; ++m) {
    for (std::size_t b = first; b < first + count; ++b) {
      out << names[m] << ',' << method_name(backends[b]);
      auto value = [&](const MetricRow& r) {
        const auto& s = r.metrics;
        return m == 0 ? s.overall_accuracy : m == 1 ? s.mean_accuracy : s.mean_iou;
      };
      for (std::size_t d = 0; d < day_labels.size(); ++d) {
        std::snprintf(buf, sizeof buf, ",%.6f", value(report.rows[d * report.backend_count + b]));
        out << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.6f\n", value(report.mean(b)));
      out << buf;
    }
  }
  return out.str();
}

void cmd_evaluate(const EvaluateArgs& a, const std::vector<std::string>& argv) {
  const ScenarioConfig scenario = load_data_scenario(a.data);
  const bool single = !a.compare && !a.sweep;
  const BackendKind kind = parse_backend(a.backend);
  if (single && a.mntd && kind != BackendKind::kNapLstm) {
    throw ConfigError("--mntd applies to the naplstm backend only");
  }
  const bool needs_model = !single || kind != BackendKind::kBayesian;
  std::shared_ptr<const LstmParams> params;
  if (needs_model) {
    params = load_fusion_model(a.model, single ? "backend " + a.backend : std::string("--compare/--sweep-mntd"));
  } else if (!a.model.empty()) {
    throw ConfigError("backend bayes takes no fusion model (drop --model)");
  }
  const ObservationSettings settings = observation_settings(scenario, a.source, a.perception, !needs_model);
  settings.validate();

  std::vector<FusionBackend> backends;
  std::size_t compare_count = 0;
  std::size_t sweep_first = 0;
  if (single) {
    if (kind == BackendKind::kBayesian) backends.push_back(FusionBackend::bayesian());
    else if (kind == BackendKind::kStandardLstm) backends.push_back(FusionBackend::standard_lstm(params));
    else backends.push_back(FusionBackend::nap_lstm(params, Mntd::parse(a.mntd.value_or("day"), scenario.frame_rate)));
    backends[0] = with_clock(backends[0], scenario);
  }
  if (a.compare) {
    backends = comparison_backends(params, scenario);
    compare_count = backends.size();
  }
  if (a.sweep) {
    sweep_first = backends.size();
    for (auto& b : sweep_backends(params, scenario)) backends.push_back(std::move(b));
  }

  Run run("evaluate", a.common, argv);
  run.config_path("data", a.data);
  run.config_path("model", a.model);
  run.config_path("perception", a.perception);
  run.seed(scenario.seed);
  json eff;
  eff["observation_source"] = a.source;
  eff["test_days"] = test_days(scenario);
  eff["backends"] = json::array();
  for (const auto& b : backends) eff["backends"].push_back({{"kind", to_string(b.kind)}, {"mntd", mntd_label(b)}});
  eff["save_maps"] = a.save_maps;
  run.effective(eff);

  const World world = generate_world(scenario);
  const auto days = test_days(scenario);
  EvaluationOptions options;
  if (a.save_maps) {
    fs::create_directories(run.dir() / "maps");
    for (std::size_t d : days) {
      for (const auto& b : backends) {
        std::string tag = method_name(b);
        std::replace(tag.begin(), tag.end(), '(', '_');
        tag.erase(std::remove(tag.begin(), tag.end(), ')'), tag.end());
        run.output("maps/" + day_name(d) + "_" + tag + ".rcmap");
      }
    }
    options.on_day_map = [&](std::size_t day, std::size_t b, const VoxelMap& map, const VoxelMap&) {
      std::string tag = method_name(backends[b]);
      std::replace(tag.begin(), tag.end(), '(', '_');
      tag.erase(std::remove(tag.begin(), tag.end(), ')'), tag.end());
      save_map(run.dir() / "maps" / (day_name(day) + "_" + tag + ".rcmap"), map);
    };
  }
  std::cerr << "[evaluate] " << backends.size() << " backend(s) on " << days.size() << " test day(s)\n";
  const EvaluationReport report = evaluate(world, days, settings, backends, options);

  {
    std::ostringstream csv;
    write_metrics_csv(csv, report.rows);
    write_text(run.output("metrics.csv"), csv.str());
  }
  write_text(run.output("metrics.json"), metrics_to_json(report.rows) + "\n");
  if (a.compare) write_text(run.output("comparison.csv"), comparison_table(report, backends, 0, compare_count));
  if (a.sweep) {
    std::vector<MetricRow> rows;
    for (const auto& r : report.rows) {
      if (r.day == "mean") continue;
      const std::size_t b = static_cast<std::size_t>(&r - report.rows.data()) % report.backend_count;
      if (b >= sweep_first) rows.push_back(r);
    }
    std::ostringstream csv;
    write_metrics_csv(csv, rows);
    write_text(run.output("mntd_sweep.csv"), csv.str());
  }

  for (std::size_t b = 0; b < backends.size(); ++b) {
    const auto& m = report.mean(b).metrics;
    std::printf("%-14s overall %.4f  mean acc %.4f  mIoU %.4f\n", method_name(backends[b]).c_str(),
                m.overall_accuracy, m.mean_accuracy, m.mean_iou);
  }
  std::fflush(stdout);
  run.finish();
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ArgumentError*>(&e)) return kExitArgument;
  if (dynamic_cast<const LoadError*>(&e)) return kExitLoad;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitLoad;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitInternal;
}

const char* error_label(int code) {
  switch (code) {
    case kExitConfig:
      return "configuration error";
    case kExitArgument:
      return "argument error";
    case kExitLoad:
      return "file error";
    case kExitNumeric:
      return "numeric error";
    default:
      return "internal error";
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Recurrent semantic voxel mapping: simulate, train, evaluate"};
  app.name("recurrent_octomap");
  app.set_version_flag("--version", ROM_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a multi-day synthetic dataset");
  add_common(c_sim, sim.common, true);
  c_sim->add_option("--scenario", sim.scenario, "Scenario JSON (merge patch over the profile)");
  c_sim->add_option("--days", sim.days, "Number of days");
  c_sim->add_flag("--no-scans", sim.no_scans, "Skip the per-frame scan files");

  PerceptionArgs per;
  auto* c_per = app.add_subcommand("train-perception", "Train the per-scan classifier");
  add_common(c_per, per.common, true);
  c_per->add_option("--config", per.config, "Perception config JSON");
  c_per->add_option("--data", per.data, "Labelled scan corpus directory (default: built-in shapes corpus)");
  c_per->add_option("--epochs", per.epochs, "Epoch override");

  FusionArgs fus;
  auto* c_fus = app.add_subcommand("train-fusion", "Train the fusion LSTM on the training days");
  add_common(c_fus, fus.common, true);
  c_fus->add_option("--data", fus.data, "Dataset directory from simulate")->required();
  c_fus->add_option("--perception", fus.perception, "Output directory of train-perception");
  c_fus->add_option("--source", fus.source, "Observation source")->check(CLI::IsMember({"noise", "perception"}));
  c_fus->add_option("--config,--train-config", fus.config, "Train config JSON");
  c_fus->add_option("--resume", fus.resume, "Continue from a fusion.rwt checkpoint");
  c_fus->add_option("--epochs", fus.epochs, "Epoch override (total, including resumed epochs)");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score fusion backends on the test days");
  add_common(c_ev, ev.common, false);
  c_ev->add_option("--data", ev.data, "Dataset directory from simulate")->required();
  c_ev->add_option("--model", ev.model, "Fusion model (fusion.rwt)");
  c_ev->add_option("--perception", ev.perception, "Output directory of train-perception");
  c_ev->add_option("--source", ev.source, "Observation source")->check(CLI::IsMember({"noise", "perception"}));
  c_ev->add_option("--backend", ev.backend, "bayes, lstm or naplstm")
      ->check(CLI::IsMember({"bayes", "lstm", "naplstm"}));
  c_ev->add_option("--mntd", ev.mntd, "NapLSTM MNTD: frames, <x>s, 'day' or 'inf'");
  c_ev->add_flag("--compare", ev.compare, "Bayes, StandardLSTM and NapLSTM(day) on identical inputs");
  c_ev->add_flag("--sweep-mntd", ev.sweep, "NapLSTM over the MNTD grid");
  c_ev->add_flag("--save-maps", ev.save_maps, "Write the final semantic map of every day and backend");

  std::vector<std::string> argv{"recurrent_octomap"};
  argv.insert(argv.end(), args.begin(), args.end());
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*c_sim) cmd_simulate(sim, argv);
    else if (*c_per) cmd_train_perception(per, argv);
    else if (*c_fus) cmd_train_fusion(fus, argv);
    else if (*c_ev) cmd_evaluate(ev, argv);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    std::cerr << "recurrent_octomap: " << error_label(code) << ": " << e.what() << "\n";
    return code;
  }
  return kExitOk;
}

}  // namespace rom::cli

#include "recurrent_octomap/fusion/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/parallel.hpp"
#include "recurrent_octomap/neural/loss.hpp"

namespace rom {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kBayesian:
      return "bayes";
    case BackendKind::kStandardLstm:
      return "lstm";
    case BackendKind::kNapLstm:
      return "naplstm";
  }
  return "unknown";
}

BackendKind parse_backend(std::string_view text) {
  if (text == "bayes") return BackendKind::kBayesian;
  if (text == "lstm") return BackendKind::kStandardLstm;
  if (text == "naplstm") return BackendKind::kNapLstm;
  throw ConfigError("unknown backend '" + std::string(text) + "' (expected bayes, lstm or naplstm)");
}

Mntd Mntd::of_seconds(double seconds, double frame_rate) {
  if (!(seconds >= 0.0) || !(frame_rate > 0.0) || !std::isfinite(seconds)) {
    throw ConfigError("MNTD seconds and frame rate must be finite and non-negative");
  }
  return of_frames(static_cast<std::uint64_t>(std::llround(seconds * frame_rate)));
}

Mntd Mntd::parse(std::string_view text, double frame_rate) {
  if (text == "inf" || text == "infinite") return infinite();
  if (text == "day") return one_day();
  if (!text.empty() && text.back() == 's') {
    double sec = 0.0;
    const auto body = text.substr(0, text.size() - 1);
    auto r = std::from_chars(body.data(), body.data() + body.size(), sec);
    if (r.ec == std::errc() && r.ptr == body.data() + body.size()) return of_seconds(sec, frame_rate);
  } else {
    std::uint64_t n = 0;
    auto r = std::from_chars(text.data(), text.data() + text.size(), n);
    if (r.ec == std::errc() && r.ptr == text.data() + text.size()) return of_frames(n);
  }
  throw ConfigError("invalid MNTD '" + std::string(text) + "' (expected frames, <seconds>s, day or inf)");
}

std::string Mntd::to_string() const {
  switch (kind) {
    case Kind::kInfinite:
      return "inf";
    case Kind::kOneDay:
      return "day";
    case Kind::kFrames:
      break;
  }
  return std::to_string(frames);
}

std::optional<std::uint64_t> Mntd::resolve(std::uint64_t frames_per_day) const {
  switch (kind) {
    case Kind::kInfinite:
      return std::nullopt;
    case Kind::kOneDay:
      return frames_per_day;
    case Kind::kFrames:
      break;
  }
  return frames;
}

FusionBackend FusionBackend::bayesian() { return FusionBackend{}; }

FusionBackend FusionBackend::standard_lstm(std::shared_ptr<const LstmParams> params) {
  FusionBackend b;
  b.kind = BackendKind::kStandardLstm;
  b.mntd = Mntd::of_frames(0);
  b.params = std::move(params);
  return b;
}

FusionBackend FusionBackend::nap_lstm(std::shared_ptr<const LstmParams> params, Mntd mntd) {
  FusionBackend b;
  b.kind = BackendKind::kNapLstm;
  b.mntd = mntd;
  b.params = std::move(params);
  return b;
}

Mntd FusionBackend::effective_mntd() const {
  return kind == BackendKind::kStandardLstm ? Mntd::of_frames(0) : mntd;
}

std::uint64_t FusionBackend::frames_per_day() const {
  return static_cast<std::uint64_t>(std::llround(day_period * frame_rate));
}

std::int64_t FusionBackend::gap_frames(double previous_time, double now) const {
  return std::llround((now - previous_time) * frame_rate);
}

void FusionBackend::validate() const {
  if (!(frame_rate > 0.0) || !(day_period > 0.0)) {
    throw ConfigError("fusion backend: frame_rate and day_period must be positive");
  }
  if (recurrent()) {
    if (!params) throw ConfigError("fusion backend '" + std::string(to_string(kind)) + "' needs LSTM weights");
    params->validate();
  }
}

Vector bayes_update(std::span<const double> prior, std::span<const double> likelihood) {
  if (!prior.empty() && prior.size() != likelihood.size()) {
    throw ArgumentError("bayes_update: prior and likelihood sizes differ");
  }
  if (likelihood.empty()) throw ArgumentError("bayes_update: empty likelihood");
  Vector log_post(likelihood.size());
  for (std::size_t c = 0; c < likelihood.size(); ++c) {
    if (likelihood[c] < 0.0 || (!prior.empty() && prior[c] < 0.0)) {
      throw ArgumentError("bayes_update: negative probability");
    }
    const double p = prior.empty() ? 1.0 / static_cast<double>(likelihood.size()) : prior[c];
    log_post[c] = std::log(std::max(p, kProbabilityFloor)) +
                  std::log(std::max(likelihood[c], kProbabilityFloor));
  }
  return softmax(log_post);
}

bool nap_retains(std::int64_t gap_frames, const Mntd& mntd, std::uint64_t frames_per_day) {
  if (gap_frames < 0) throw ArgumentError("nap_gate: negative gap " + std::to_string(gap_frames));
  const auto budget = mntd.resolve(frames_per_day);
  if (!budget) return true;
  return gap_frames - 1 <= static_cast<std::int64_t>(std::min<std::uint64_t>(
                               *budget, std::numeric_limits<std::int64_t>::max()));
}

bool nap_gate(LstmState& state, std::int64_t gap_frames, const Mntd& mntd,
              std::uint64_t frames_per_day) {
  const bool keep = nap_retains(gap_frames, mntd, frames_per_day);
  if (!keep) state.reset();
  return keep;
}

void recurrent_update(Cell& cell, std::span<const double> f_cell, const LstmParams& params) {
  if (f_cell.size() != params.input_dim) {
    throw ConfigError("recurrent_update: f_cell has " + std::to_string(f_cell.size()) +
                      " entries, LSTM expects " + std::to_string(params.input_dim));
  }
  if (cell.state.cell.size() != params.num_layers()) cell.state = LstmState::zeros(params);
  cell.state = lstm_step(params, f_cell, cell.state);
  cell.prob = softmax(decode_logits(params, cell.state.hidden.back()));
}

namespace {

void fuse_one(Cell& cell, std::span<const double> payload, std::optional<std::int64_t> gap,
              const FusionBackend& backend) {
  if (backend.kind == BackendKind::kBayesian) {
    cell.prob = bayes_update(gap ? std::span<const double>(cell.prob) : std::span<const double>(), payload);
    return;
  }
  if (gap && !cell.state.cell.empty()) {
    nap_gate(cell.state, *gap, backend.effective_mntd(), backend.frames_per_day());
  } else {
    cell.state = LstmState::zeros(*backend.params);
  }
  recurrent_update(cell, payload, *backend.params);
}

}  // namespace

void fuse_observations(VoxelMap& map, std::span<const CellObservation> observations,
                       const FusionBackend& backend, std::size_t threads) {
  backend.validate();
  const double now = map.latest_time();
  std::vector<Cell*> cells(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    cells[i] = map.find(observations[i].key);
    if (!cells[i]) throw ArgumentError("fuse_observations: observation for a missing cell");
    if (backend.kind == BackendKind::kBayesian && observations[i].likelihood.empty()) {
      throw ArgumentError("fuse_observations: Bayesian backend needs class likelihoods");
    }
  }
  parallel_for(
      observations.size(),
      [&](std::size_t i) {
        const auto& obs = observations[i];
        std::optional<std::int64_t> gap;
        if (obs.previous_obs_time) gap = backend.gap_frames(*obs.previous_obs_time, now);
        const Vector& payload = backend.kind == BackendKind::kBayesian ? obs.likelihood : obs.feature;
        fuse_one(*cells[i], payload, gap, backend);
      },
      threads);
}

std::vector<Vector> fuse_stream(std::span<const ObservationEvent> events,
                                const FusionBackend& backend) {
  backend.validate();
  std::vector<Vector> out;
  out.reserve(events.size());
  Cell cell;
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::optional<std::int64_t> gap;
    if (i > 0) {
      if (events[i].key != events[0].key) throw ArgumentError("fuse_stream: events of different cells");
      if (events[i].frame < events[i - 1].frame) {
        throw ArgumentError("fuse_stream: events not sorted by time at index " + std::to_string(i));
      }
      gap = events[i].frame - events[i - 1].frame;
    }
    fuse_one(cell, events[i].payload, gap, backend);
    out.push_back(cell.prob);
  }
  return out;
}

void write_prob_history(std::ostream& out, std::span<const ProbRecord> records) {
  const std::size_t n = records.empty() ? 4 : records.front().prob.size();
  out << "cell_ix,cell_iy,cell_iz,frame";
  for (std::size_t c = 0; c < n; ++c) out << ",prob_" << c;
  out << ",argmax\n";
  char buf[32];
  for (const auto& r : records) {
    if (r.prob.size() != n) throw ArgumentError("write_prob_history: inconsistent class count");
    out << r.key.ix << ',' << r.key.iy << ',' << r.key.iz << ',' << r.frame;
    for (double p : r.prob) {
      std::snprintf(buf, sizeof buf, ",%.17g", p);
      out << buf;
    }
    out << ',' << (std::max_element(r.prob.begin(), r.prob.end()) - r.prob.begin()) << '\n';
  }
}

}  // namespace rom

#include <algorithm>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "recurrent_octomap/common/errors.hpp"
#include "recurrent_octomap/common/rng.hpp"
#include "recurrent_octomap/fusion/fusion.hpp"
#include "recurrent_octomap/neural/loss.hpp"

using namespace rom;
using BigFloat = boost::multiprecision::cpp_dec_float_50;

namespace {

Vector random_likelihood(Rng& rng, std::size_t n = 4) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(0.01, 1.0);
  return v;
}

std::shared_ptr<LstmParams> random_lstm(std::uint64_t seed, std::size_t in = 6, std::size_t hidden = 5) {
  Rng rng(seed);
  return std::make_shared<LstmParams>(make_lstm(in, hidden, 2, 4, rng));
}

std::vector<ObservationEvent> gapped_events(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<ObservationEvent> ev;
  std::int64_t frame = 0;
  for (std::size_t i = 0; i < n; ++i) {
    frame += 1 + static_cast<std::int64_t>(rng.below(4)) * static_cast<std::int64_t>(rng.below(4));
    ObservationEvent e;
    e.key = {1, 2, 3};
    e.frame = frame;
    e.time = frame / 10.0;
    e.payload.resize(dim);
    for (double& x : e.payload) x = rng.uniform(-1, 1);
    ev.push_back(e);
  }
  return ev;
}

double sum(const Vector& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("uniform prior times likelihood gives normalized likelihood") {
  const Vector l{0.2, 0.6, 0.1, 0.1};
  const auto post = bayes_update({}, l);
  for (std::size_t c = 0; c < 4; ++c) CHECK(post[c] == doctest::Approx(l[c]).epsilon(1e-14));
  const Vector uniform(4, 0.25);
  const Vector l2{2.0, 1.0, 1.0, 0.0};
  const auto post2 = bayes_update(uniform, l2);
  CHECK(post2[0] == doctest::Approx(0.5).epsilon(1e-11));
  CHECK(post2[3] == doctest::Approx(0.25e-12).epsilon(1e-6));
}

TEST_CASE("floors keep the posterior defined") {
  const Vector prior{1.0, 0.0};
  const Vector lik{0.0, 1.0};
  const auto post = bayes_update(prior, lik);
  CHECK(post[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(bayes_update(Vector{0.5, 0.5}, Vector{1.0}), ArgumentError);
  CHECK_THROWS_AS(bayes_update({}, Vector{-0.1, 1.0}), ArgumentError);
}

TEST_CASE("sequential Bayesian fusion matches extended-precision product") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.below(20);
    Vector post;
    std::vector<BigFloat> prod(4, BigFloat(1));
    for (std::size_t t = 0; t < T; ++t) {
      const auto l = random_likelihood(rng);
      post = bayes_update(post, l);
      for (std::size_t c = 0; c < 4; ++c) prod[c] *= BigFloat(l[c]);
    }
    BigFloat z = 0;
    for (const auto& p : prod) z += p;
    for (std::size_t c = 0; c < 4; ++c) {
      const double ref = static_cast<double>(prod[c] / z);
      CHECK(std::abs(post[c] - ref) < 1e-9);
    }
  }
}

TEST_CASE("Bayesian fusion is associative up to normalization") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_likelihood(rng), b = random_likelihood(rng), c = random_likelihood(rng);
    const auto left = bayes_update(bayes_update(a, b), c);
    const auto right = bayes_update(a, bayes_update(b, c));
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(left[k] - right[k]) < 1e-9);
  }
}

TEST_CASE("Bayesian argmax equals argmax of summed floored log-likelihoods") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 1 + rng.below(20);
    Vector post;
    Vector logsum(4, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      Vector l(4);
      // Strictly positive draws: once the floor binds on the running
      // posterior, later evidence is compared against 1e-12, not the true
      // product, so the identity only holds while the floor is inactive.
      for (double& x : l) x = rng.uniform(1e-3, 1.0);
      post = bayes_update(post, l);
      for (std::size_t c = 0; c < 4; ++c) logsum[c] += std::log(std::max(l[c], 1e-12));
    }
    const auto best = std::max_element(logsum.begin(), logsum.end()) - logsum.begin();
    // Skip near ties where rounding could legitimately flip the order.
    Vector sorted = logsum;
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] - sorted[1] < 1e-9) continue;
    CHECK(std::max_element(post.begin(), post.end()) - post.begin() == best);
  }
}

TEST_CASE("nap gate follows the missing-frame rule") {
  LstmState s = LstmState::zeros(2, 3);
  s.cell[0][0] = 1.0;
  s.hidden[1][2] = -0.5;
  // Observations at t1 and t4: two missing frames.
  LstmState kept = s;
  CHECK(nap_gate(kept, 3, Mntd::of_frames(2), 864000));
  CHECK(kept == s);
  LstmState reset = s;
  CHECK_FALSE(nap_gate(reset, 3, Mntd::of_frames(1), 864000));
  CHECK(reset.is_zero());
  CHECK(reset.cell.size() == 2);
  CHECK(nap_retains(1, Mntd::of_frames(0), 864000));
  CHECK_FALSE(nap_retains(2, Mntd::of_frames(0), 864000));
  CHECK(nap_retains(1000000000, Mntd::infinite(), 864000));
  CHECK(nap_retains(864001, Mntd::one_day(), 864000));
  CHECK_FALSE(nap_retains(864002, Mntd::one_day(), 864000));
  CHECK_THROWS_AS(nap_retains(-1, Mntd::infinite(), 1), ArgumentError);
}

TEST_CASE("MNTD parsing") {
  CHECK(Mntd::parse("inf") == Mntd::infinite());
  CHECK(Mntd::parse("day") == Mntd::one_day());
  CHECK(Mntd::parse("100") == Mntd::of_frames(100));
  CHECK(Mntd::parse("2.5s", 10.0) == Mntd::of_frames(25));
  CHECK(Mntd::parse("100").to_string() == "100");
  CHECK_THROWS_AS(Mntd::parse("-3"), ConfigError);
  CHECK_THROWS_AS(Mntd::parse("ten"), ConfigError);
  CHECK(parse_backend("naplstm") == BackendKind::kNapLstm);
  CHECK_THROWS_AS(parse_backend("crf"), ConfigError);
  CHECK(FusionBackend::bayesian().frames_per_day() == 864000);
}

TEST_CASE("recurrent update examples") {
  auto params = random_lstm(4);
  SUBCASE("zero weights give uniform prob") {
    auto zero = std::make_shared<LstmParams>(zeros_like(*params));
    Cell cell;
    recurrent_update(cell, Vector{1, 2, 3, 4, 5, 6}, *zero);
    for (double p : cell.prob) CHECK(p == doctest::Approx(0.25));
  }
  SUBCASE("identical cells give identical outputs") {
    Cell a, b;
    const Vector x{0.1, -0.2, 0.3, 0.4, 0.0, 1.0};
    recurrent_update(a, x, *params);
    recurrent_update(b, x, *params);
    CHECK(a == b);
  }
  SUBCASE("composition of lstm_step and softmax") {
    Rng rng(5);
    Cell cell;
    LstmState ref = LstmState::zeros(*params);
    for (int t = 0; t < 5; ++t) {
      Vector x(6);
      for (double& v : x) v = rng.uniform(-1, 1);
      recurrent_update(cell, x, *params);
      ref = lstm_step(*params, x, ref);
      const auto probs = softmax(decode_logits(*params, ref.hidden.back()));
      CHECK(cell.state == ref);
      CHECK(cell.prob == probs);
    }
  }
  Cell cell;
  CHECK_THROWS_AS(recurrent_update(cell, Vector{1, 2}, *params), ConfigError);
}

TEST_CASE("single event: every backend returns the standalone prediction") {
  auto params = random_lstm(6, 4);
  ObservationEvent e;
  e.payload = {0.4, 0.3, 0.2, 0.1};
  const std::vector<ObservationEvent> one{e};
  const auto bayes = fuse_stream(one, FusionBackend::bayesian());
  REQUIRE(bayes.size() == 1);
  for (std::size_t c = 0; c < 4; ++c) CHECK(bayes[0][c] == doctest::Approx(e.payload[c]).epsilon(1e-12));
  const auto zero = LstmState::zeros(*params);
  const auto expected = softmax(decode_logits(*params, lstm_step(*params, e.payload, zero).hidden.back()));
  CHECK(fuse_stream(one, FusionBackend::standard_lstm(params))[0] == expected);
  CHECK(fuse_stream(one, FusionBackend::nap_lstm(params, Mntd::of_frames(3)))[0] == expected);
}

TEST_CASE("NapLSTM(0) equals StandardLSTM and NapLSTM(inf) is one unbroken run") {
  Rng rng(7);
  auto params = random_lstm(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto events = gapped_events(rng, 40, 6);
    const auto standard = fuse_stream(events, FusionBackend::standard_lstm(params));
    const auto nap0 = fuse_stream(events, FusionBackend::nap_lstm(params, Mntd::of_frames(0)));
    CHECK(standard == nap0);

    const auto naps = fuse_stream(events, FusionBackend::nap_lstm(params, Mntd::infinite()));
    std::vector<Vector> inputs;
    for (const auto& e : events) inputs.push_back(e.payload);
    const auto trace = forward_sequence(*params, inputs);
    for (std::size_t t = 0; t < events.size(); ++t) CHECK(naps[t] == trace.probs[t]);

    // StandardLSTM output after a gap equals a fresh single-step prediction.
    for (std::size_t t = 1; t < events.size(); ++t) {
      if (events[t].frame - events[t - 1].frame > 1) {
        const auto fresh = fuse_stream(std::span(events).subspan(t, 1), FusionBackend::standard_lstm(params));
        CHECK(standard[t] == fresh[0]);
      }
    }
  }
}

TEST_CASE("shared weights: perturbing the parameters changes every cell") {
  auto params = random_lstm(9);
  auto backend = FusionBackend::nap_lstm(params, Mntd::infinite());
  VoxelMap map;
  std::vector<Eigen::Vector3d> pts{{0.1, 0.1, 0.1}, {5.1, 0.1, 0.1}};
  Matrix feats(2, 6, 0.3);
  feats(1, 0) = -0.7;
  auto obs = map.insert_scan(pts, feats, nullptr, 0.0);
  fuse_observations(map, obs, backend);
  const auto before_a = map.find(obs[0].key)->prob;
  const auto before_b = map.find(obs[1].key)->prob;
  params->decoder_bias[2] += 1.0;
  obs = map.insert_scan(pts, feats, nullptr, 0.1);
  VoxelMap ref_map;
  auto ref_obs = ref_map.insert_scan(pts, feats, nullptr, 0.0);
  fuse_observations(ref_map, ref_obs, backend);
  const auto after_a = ref_map.find(obs[0].key)->prob;
  CHECK(after_a != before_a);
  CHECK(after_a[2] > before_a[2]);
  CHECK(ref_map.find(obs[1].key)->prob != before_b);
}

TEST_CASE("prob sums to one on every backend") {
  Rng rng(10);
  auto params = random_lstm(11, 4);
  const std::vector<FusionBackend> backends{FusionBackend::bayesian(), FusionBackend::standard_lstm(params),
                                            FusionBackend::nap_lstm(params, Mntd::of_frames(2))};
  for (int trial = 0; trial < 20; ++trial) {
    auto events = gapped_events(rng, 30, 4);
    for (auto& e : events)
      for (double& x : e.payload) x = std::abs(x) * (rng.bernoulli(0.1) ? 0.0 : 1.0);
    for (const auto& b : backends)
      for (const auto& p : fuse_stream(events, b)) CHECK(std::abs(sum(p) - 1.0) < 1e-9);
  }
}

TEST_CASE("fuse_stream rejects unsorted events and missing weights") {
  Rng rng(12);
  auto events = gapped_events(rng, 5, 4);
  std::swap(events[1], events[3]);
  CHECK_THROWS_AS(fuse_stream(events, FusionBackend::bayesian()), ArgumentError);
  FusionBackend broken;
  broken.kind = BackendKind::kNapLstm;
  CHECK_THROWS_AS(fuse_stream({}, broken), ConfigError);
}

TEST_CASE("map fusion follows gaps from timestamps and is thread-count independent") {
  auto params = random_lstm(13);
  Rng rng(14);
  auto run = [&](std::size_t threads, const FusionBackend& backend) {
    VoxelMap map;
    Rng local(15);
    for (int frame = 0; frame < 30; ++frame) {
      std::vector<Eigen::Vector3d> pts;
      for (int i = 0; i < 200; ++i)
        if (local.bernoulli(0.7)) pts.emplace_back(local.uniform(0, 4), local.uniform(0, 4), 0.1);
      Matrix feats(pts.size(), 6), probs(pts.size(), 4);
      for (double& v : feats.values()) v = local.uniform(-1, 1);
      for (double& v : probs.values()) v = local.uniform(0.1, 1);
      const auto obs = map.insert_scan(pts, feats, &probs, frame / 10.0);
      fuse_observations(map, obs, backend, threads);
    }
    return map;
  };
  for (const auto& backend : {FusionBackend::bayesian(), FusionBackend::nap_lstm(params, Mntd::of_frames(1))}) {
    const auto serial = run(1, backend);
    const auto parallel = run(4, backend);
    CHECK(serial == parallel);
    for (const auto& [k, c] : serial.cells()) CHECK(std::abs(sum(c.prob) - 1.0) < 1e-9);
  }

  // Event-wise replay of one cell reproduces the map result.
  const auto backend = FusionBackend::nap_lstm(params, Mntd::of_frames(1));
  VoxelMap map;
  std::vector<ObservationEvent> events;
  const std::vector<int> frames{0, 1, 3, 4, 8, 9, 10};
  for (int f : frames) {
    const std::vector<Eigen::Vector3d> pts{{0.1, 0.1, 0.1}};
    Matrix feat(1, 6);
    for (double& v : feat.values()) v = rng.uniform(-1, 1);
    const auto obs = map.insert_scan(pts, feat, nullptr, f / 10.0);
    fuse_observations(map, obs, backend);
    events.push_back({obs[0].key, f, f / 10.0, obs[0].feature});
  }
  CHECK(fuse_stream(events, backend).back() == map.find({0, 0, 0})->prob);
}

TEST_CASE("prob history CSV") {
  std::vector<ProbRecord> recs{{{1, -2, 3}, 7, {0.1, 0.6, 0.2, 0.1}}};
  std::ostringstream out;
  write_prob_history(out, recs);
  CHECK(out.str() == "cell_ix,cell_iy,cell_iz,frame,prob_0,prob_1,prob_2,prob_3,argmax\n"
                     "1,-2,3,7,0.10000000000000001,0.59999999999999998,0.20000000000000001,"
                     "0.10000000000000001,1\n");
}

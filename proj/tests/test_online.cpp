#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bciwalk/error.hpp"
#include "bciwalk/online.hpp"
#include "fixtures.hpp"

using namespace bciwalk;

constexpr auto I = BrainState::Idle;
constexpr auto W = BrainState::Walk;

TEST_CASE("smoothing window") {
  FsmConfig cfg;
  CHECK(cfg.history_len() == 3);
  const double h[] = {0.2, 0.5, 0.8};
  CHECK(smooth(h) == doctest::Approx(0.5));
  PosteriorWindow w(3);
  for (double p : {0.1, 0.2, 0.3, 0.9}) w.push(p);
  CHECK(w.size() == 3);
  CHECK(w.values() == std::vector<double>{0.2, 0.3, 0.9});
  CHECK(w.mean() == doctest::Approx(1.4 / 3));
  w.clear();
  CHECK(w.empty());
}

TEST_CASE("state machine truth table") {
  const FsmConfig cfg{0.40, 0.62};
  struct Row {
    BrainState from;
    double p;
    BrainState to;
  };
  const Row rows[] = {
      {I, 0.10, I}, {I, 0.40, I}, {I, 0.50, I}, {I, 0.62, I}, {I, 0.63, W}, {I, 0.99, W},
      {W, 0.99, W}, {W, 0.62, W}, {W, 0.50, W}, {W, 0.40, W}, {W, 0.39, I}, {W, 0.01, I},
  };
  for (const auto& r : rows) {
    CAPTURE(r.p);
    CHECK(fsm_transition(r.from, r.p, cfg) == r.to);
  }
}

TEST_CASE("equal thresholds act as a comparator") {
  const FsmConfig cfg{0.5, 0.5};
  CHECK(fsm_transition(I, 0.51, cfg) == W);
  CHECK(fsm_transition(W, 0.49, cfg) == I);
  CHECK(fsm_transition(I, 0.5, cfg) == I);
  CHECK(fsm_transition(W, 0.5, cfg) == W);
}

TEST_CASE("hysteresis: no change inside the band, always change outside") {
  const FsmConfig cfg{0.40, 0.62};
  Rng rng(99);
  for (int stream = 0; stream < 10000; ++stream) {
    FsmState s = make_fsm_state(cfg);
    for (int k = 0; k < 20; ++k) {
      const BrainState before = s.state;
      const double p = fsm_observe(s, rng.uniform(), cfg);
      if (p >= cfg.t_idle && p <= cfg.t_walk) REQUIRE(s.state == before);
      if (p > cfg.t_walk) REQUIRE(s.state == W);
      if (p < cfg.t_idle) REQUIRE(s.state == I);
    }
  }
}

TEST_CASE("fsm clock and history") {
  const FsmConfig cfg;
  FsmState s = make_fsm_state(cfg);
  CHECK(fsm_observe(s, 0.9, cfg) == doctest::Approx(0.9));
  CHECK(fsm_observe(s, 0.3, cfg) == doctest::Approx(0.6));
  CHECK(fsm_observe(s, 0.0, cfg) == doctest::Approx(0.4));
  CHECK(fsm_observe(s, 0.0, cfg) == doctest::Approx(0.1));
  CHECK(s.clock_s == doctest::Approx(2.0));
  const FsmState next = fsm_step(s, 0.9, cfg);
  CHECK(next.state == W);
  CHECK(next.history.values() == s.history.values());
}

TEST_CASE("threshold validation") {
  CHECK_THROWS_AS((FsmConfig{0.7, 0.3}.validate()), InvalidInput);
  CHECK_THROWS_AS((FsmConfig{-0.1, 0.3}.validate()), InvalidInput);
  CHECK_NOTHROW((FsmConfig{-0.1, 1.01}.validate_ordering()));
  CHECK_THROWS_AS((FsmConfig{0.6, 0.5}.validate_ordering()), InvalidInput);
}

TEST_CASE("histogram and quantiles") {
  const std::vector<double> v{0.0, 0.05, 0.5, 1.0, 1.5, -2.0};
  const Histogram h = make_histogram(v, 20);
  CHECK(h.counts.size() == 20);
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[10] == 1);
  CHECK(h.counts[19] == 2);
  CHECK(h.bin_width() == doctest::Approx(0.05));
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(median({5, 1, 3}) == doctest::Approx(3));
}

TEST_CASE("calibration medians") {
  std::vector<double> post;
  std::vector<BrainState> cond;
  for (int i = 0; i <= 100; ++i) {
    post.push_back(0.5 * i / 100.0);
    cond.push_back(I);
    post.push_back(0.5 + 0.5 * i / 100.0);
    cond.push_back(W);
  }
  const CalibrationReport r = calibrate(post, cond);
  CHECK(r.suggested_t_idle == doctest::Approx(0.25));
  CHECK(r.suggested_t_walk == doctest::Approx(0.75));
  CHECK(r.idle_quartiles[0] == doctest::Approx(0.125));
  CHECK(r.walk_quartiles[2] == doctest::Approx(0.875));
  CHECK(r.separable);
  const FsmConfig t = r.thresholds();
  CHECK(t.t_idle == doctest::Approx(0.25));
  CHECK(t.t_walk == doctest::Approx(0.75));
}

TEST_CASE("inverted calibration is flagged and ordered") {
  const std::vector<double> post{0.8, 0.9, 0.1, 0.2};
  const std::vector<BrainState> cond{I, I, W, W};
  const CalibrationReport r = calibrate(post, cond);
  CHECK_FALSE(r.separable);
  const FsmConfig t = r.thresholds();
  CHECK(t.t_idle <= t.t_walk);
  CHECK_THROWS_AS(calibrate(std::vector<double>{0.1}, std::vector<BrainState>{I}), InvalidInput);
}

TEST_CASE("thresholds file round-trip") {
  const auto dir = testing::scratch_dir("thresholds");
  const FsmConfig cfg{0.31, 0.67};
  save_thresholds(cfg, dir / "t.json");
  CHECK(load_thresholds(dir / "t.json") == cfg);
  std::ofstream(dir / "bad.json") << "{\"t_idle\": 0.9, \"t_walk\": 0.1}";
  CHECK_THROWS(load_thresholds(dir / "bad.json"));
}

TEST_CASE("online decoder matches the offline pipeline") {
  const DecodingModel& m = testing::trained_model();
  const EegRecording& rec = testing::default_recording();
  const OnlineDecoder dec(m);
  REQUIRE(dec.segment_samples() == 128);
  const BandpassFilter filter(m.sample_rate_hz, m.bandpass);
  for (int k = 0; k < 40; ++k) {
    const Eigen::MatrixXd seg = rec.samples.middleCols(k * 1000, 128);
    const Eigen::MatrixXd car = common_average_reference(seg);
    Eigen::MatrixXd kept(static_cast<Eigen::Index>(m.channel_mask.retained.size()), 128);
    for (std::size_t i = 0; i < m.channel_mask.retained.size(); ++i)
      kept.row(static_cast<Eigen::Index>(i)) =
          filter.filtfilt(car.row(static_cast<Eigen::Index>(m.channel_mask.retained[i])).transpose()).transpose();
    const Eigen::MatrixXd bins = psd_bins(kept, 256.0, 0.0, 40.0);
    const double expected = extract_feature(vectorize(bins, m.band), m.classifier).p_walk;
    CHECK(dec.process_segment(seg) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(process_segment(seg, m) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("online decoder checks the segment shape") {
  const OnlineDecoder dec(testing::trained_model());
  CHECK_THROWS_AS(dec.process_segment(Eigen::MatrixXd::Zero(63, 100)), InvalidInput);
  CHECK_THROWS_AS(dec.process_segment(Eigen::MatrixXd::Zero(10, 128)), InvalidInput);
}

TEST_CASE("simulated clock") {
  SimulatedClock c;
  c.wait_until(3.0);
  CHECK(c.now_s() == 3.0);
  c.wait_until(1.0);
  CHECK(c.now_s() == 3.0);
}

#include <doctest.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "bciwalk/error.hpp"
#include "bciwalk/vre.hpp"
#include "fixtures.hpp"

using namespace bciwalk;

constexpr auto I = BrainState::Idle;
constexpr auto W = BrainState::Walk;

namespace {

// Drives the course directly: walk until inside the next zone, idle for
// `dwell_ticks`, repeat.
CourseSim run_driver(int dwell_ticks) {
  CourseSim sim;
  std::size_t next = 0;
  int idle = 0;
  while (!sim.over()) {
    if (next < sim.track().n_npcs() && sim.track().zone_at(sim.position_m()) == next) {
      sim.step(I);
      if (++idle == dwell_ticks) {
        ++next;
        idle = 0;
        sim.step(W);
      }
    } else {
      sim.step(W);
    }
  }
  return sim;
}

}  // namespace

TEST_CASE("default track geometry") {
  const Track t = Track::make_default();
  REQUIRE(t.n_npcs() == 10);
  CHECK(t.min_completion_time_s() == doctest::Approx(201.52));
  CHECK(t.zone_lo(0) == doctest::Approx(18.152));
  CHECK(t.npc_positions[1] - t.npc_positions[0] == doctest::Approx(18.152));
  CHECK(t.zone_at(0.0) == std::nullopt);
  CHECK(t.zone_at(t.zone_hi(3)) == std::size_t{3});
  CHECK_NOTHROW(t.validate());
  Track bad = t;
  bad.npc_positions.pop_back();
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("stop credit") {
  CHECK(credit_stop(0.0) == 0.0);
  CHECK(credit_stop(0.49) == 0.0);
  CHECK(credit_stop(0.5) == doctest::Approx(0.25));
  CHECK(credit_stop(1.5) == doctest::Approx(0.75));
  CHECK(credit_stop(2.0) == 1.0);
  CHECK(credit_stop(9.0) == 1.0);
  ScoringConfig flat;
  flat.partial = PartialCredit::Flat;
  CHECK(credit_stop(1.0, flat) == 0.5);
  CHECK(credit_stop(0.2, flat) == 0.0);
}

TEST_CASE("kinematics") {
  CourseSim sim;
  sim.step(W);
  CHECK(sim.position_m() == doctest::Approx(0.5));
  CHECK(sim.time_s() == doctest::Approx(0.5));
  sim.step(I);
  CHECK(sim.position_m() == doctest::Approx(0.5));
  CHECK(sim.score() == 0.0);
}

TEST_CASE("always walking passes every zone without credit") {
  CourseSim sim;
  while (!sim.over()) sim.step(W);
  CHECK(sim.course_complete());
  CHECK(sim.score() == 0.0);
  CHECK(sim.time_s() == doctest::Approx(186.0));
}

TEST_CASE("always idle times out") {
  SessionRunner r(Track::make_default(), FsmConfig{0.4, 0.62});
  while (!r.done()) r.tick(0.0);
  const SessionResult res = r.result();
  CHECK_FALSE(res.finished);
  CHECK(res.stops_score == 0.0);
  CHECK(res.completion_time_s == doctest::Approx(1200.0));
  CHECK(res.ticks == 2400);
  CHECK_THROWS_AS(r.tick(0.0), InvalidInput);
}

TEST_CASE("full dwells at every NPC") {
  const CourseSim sim = run_driver(4);
  CHECK(sim.course_complete());
  CHECK(sim.score() == doctest::Approx(10.0));
  CHECK(sim.time_s() >= 201.52);
  CHECK(sim.time_s() <= 203.0);
  for (double c : sim.credits()) CHECK(c == 1.0);
}

TEST_CASE("short dwells earn partial credit") {
  const CourseSim sim = run_driver(2);
  CHECK(sim.score() == doctest::Approx(5.0));
  const auto d = sim.dwells();
  REQUIRE(d.size() == 10);
  CHECK(d[0].exit_s - d[0].entry_s == doctest::Approx(1.0));
}

TEST_CASE("a repeat visit keeps the best credit") {
  Track t = Track::make_default();
  CourseSim sim(t);
  while (!t.zone_at(sim.position_m())) sim.step(W);
  for (int i = 0; i < 3; ++i) sim.step(I);
  sim.step(W);
  sim.step(I);
  CHECK(sim.credits()[0] == doctest::Approx(0.75));
}

TEST_CASE("session runner events") {
  SessionRunner r(Track::make_default(), FsmConfig{0.4, 0.62});
  r.tick(0.9, I);  // smoothed 0.9 -> walk, intent idle: false positive
  r.tick(0.9, I);
  r.tick(0.0, W);  // smoothed 0.6 -> still walk, agrees
  r.tick(0.0, W);  // 0.3 -> idle, false negative
  const SessionResult res = r.result();
  REQUIRE(res.events.size() == 4);
  CHECK(res.events[0].kind == EventKind::Transition);
  CHECK(res.events[0].state == W);
  CHECK(res.events[0].start_s == doctest::Approx(0.5));
  CHECK(res.events[1].kind == EventKind::FalsePositive);
  CHECK(res.events[1].start_s == doctest::Approx(0.0));
  CHECK(res.events[1].end_s == doctest::Approx(1.0));
  CHECK(res.events[2].kind == EventKind::Transition);
  CHECK(res.events[2].state == I);
  CHECK(res.events[3].kind == EventKind::FalseNegative);
  CHECK(res.events[3].start_s == doctest::Approx(1.5));
}

TEST_CASE("replaying the same posteriors reproduces the result") {
  Rng rng(12);
  std::vector<double> post;
  for (int i = 0; i < 2400; ++i) post.push_back(rng.uniform());
  auto run = [&] {
    SessionRunner r(Track::make_default(), FsmConfig{0.3, 0.7});
    for (double p : post) {
      if (r.done()) break;
      r.tick(p);
    }
    return r.result();
  };
  const SessionResult a = run();
  CHECK(a == run());
  const auto dir = testing::scratch_dir("vre");
  save_session_result(a, dir / "r.json");
  CHECK(load_session_result(dir / "r.json") == a);
}

TEST_CASE("reset restarts the course") {
  SessionRunner r(Track::make_default(), FsmConfig{0.4, 0.62});
  for (int i = 0; i < 10; ++i) r.tick(1.0);
  CHECK(r.sim().position_m() > 0.0);
  r.reset();
  CHECK(r.sim().position_m() == 0.0);
  CHECK(r.sim().ticks() == 0);
  CHECK(r.result().events.empty());
}

TEST_CASE("runner rejects mismatched timing") {
  FsmConfig f;
  f.segment_len_s = 0.25;
  CHECK_THROWS_AS(SessionRunner(Track::make_default(), f), InvalidInput);
}

TEST_CASE("track and scoring JSON round-trip") {
  Track t = Track::make_default();
  t.avatar_speed_mps = 1.25;
  CHECK(nlohmann::json(t).get<Track>() == t);
  ScoringConfig s;
  s.partial = PartialCredit::Flat;
  CHECK(nlohmann::json(s).get<ScoringConfig>() == s);
}

#include <doctest.h>

#include <nlohmann/json.hpp>

#include "bciwalk/error.hpp"
#include "bciwalk/spectral.hpp"
#include "bciwalk/synth.hpp"
#include "fixtures.hpp"

using namespace bciwalk;

namespace {

// Mean 8-16 Hz power of one channel over consecutive 4-s windows of a state.
double rhythm_power(const EegRecording& rec, const std::string& ch, BrainState s) {
  const auto c = static_cast<Eigen::Index>(*rec.channel_index(ch));
  double sum = 0.0;
  int n = 0;
  for (const auto& seg : rec.labels->segments(rec.duration_s())) {
    if (seg.state != s) continue;
    // skip the ramp at each boundary
    for (double t = seg.start_s + 2.0; t + 4.0 <= seg.end_s; t += 4.0) {
      const auto from = static_cast<Eigen::Index>(t * rec.sample_rate_hz);
      sum += psd_bins(rec.samples.block(c, from, 1, 1024), rec.sample_rate_hz, 8.0, 16.0).sum();
      ++n;
    }
  }
  return sum / n;
}

SessionView view_at(double pos, BrainState st, const Track& track, const std::vector<double>& credits) {
  SessionView v;
  v.position_m = pos;
  v.fsm_state = st;
  v.track = &track;
  v.credits = &credits;
  return v;
}

}  // namespace

TEST_CASE("protocol recording layout") {
  const EegRecording& rec = testing::default_recording();
  CHECK(rec.n_channels() == 63);
  CHECK(rec.n_samples() == 256 * 600);
  REQUIRE(rec.labels);
  CHECK(rec.labels->transitions().size() == 20);
  CHECK(rec.labels->transitions()[1].time_s == doctest::Approx(30.0));
  CHECK_NOTHROW(rec.validate());
}

TEST_CASE("generation is deterministic and chunk-independent") {
  SynthSpec spec;
  spec.seed = 4;
  SynthEngine a(spec), b(spec);
  const Eigen::MatrixXd whole = a.generate(600, BrainState::Idle);
  Eigen::MatrixXd parts(63, 600);
  parts.leftCols(100) = b.generate(100, BrainState::Idle);
  parts.middleCols(100, 37) = b.generate(37, BrainState::Idle);
  parts.rightCols(463) = b.generate(463, BrainState::Idle);
  CHECK(whole == parts);
  CHECK(b.samples_emitted() == 600);
  SynthSpec other = spec;
  other.seed = 5;
  CHECK(SynthEngine(other).generate(600, BrainState::Idle) != whole);
}

TEST_CASE("walking attenuates the rhythm on central channels only") {
  const EegRecording& rec = testing::default_recording();
  const double idle = rhythm_power(rec, "Cz", BrainState::Idle);
  const double walk = rhythm_power(rec, "Cz", BrainState::Walk);
  CHECK(walk < 0.85 * idle);
  const double idle_o = rhythm_power(rec, "Oz", BrainState::Idle);
  const double walk_o = rhythm_power(rec, "Oz", BrainState::Walk);
  CHECK(std::abs(walk_o / idle_o - 1.0) < 0.1);
}

TEST_CASE("zero ERD depth makes the states indistinguishable") {
  SynthSpec spec;
  spec.erd_depth = 0.0;
  const EegRecording rec = generate_recording(spec, {30.0, 300.0});
  const double idle = rhythm_power(rec, "Cz", BrainState::Idle);
  const double walk = rhythm_power(rec, "Cz", BrainState::Walk);
  CHECK(std::abs(walk / idle - 1.0) < 0.1);
}

TEST_CASE("artifact channels carry the requested extra EMG power") {
  SynthSpec spec;
  spec.artifact_channels = {{"T7", 10.0}};
  const EegRecording rec = generate_recording(spec, {30.0, 60.0});
  const EegRecording clean = generate_recording(SynthSpec{}, {30.0, 60.0});
  const auto c = static_cast<Eigen::Index>(*rec.channel_index("T7"));
  const Eigen::MatrixXd dirty_bins = psd_bins(rec.samples.row(c), 256.0, 30.0, 40.0);
  const Eigen::MatrixXd clean_bins = psd_bins(clean.samples.row(c), 256.0, 30.0, 40.0);
  CHECK(dirty_bins.sum() / clean_bins.sum() == doctest::Approx(10.0).epsilon(0.15));
}

TEST_CASE("spec validation and JSON") {
  SynthSpec spec;
  spec.erd_depth = 1.5;
  CHECK_THROWS_AS(spec.validate(), InvalidInput);
  spec = SynthSpec{};
  spec.rhythm_channels = {"NotAChannel"};
  CHECK_THROWS_AS(spec.validate(), InvalidInput);
  spec = SynthSpec{};
  spec.artifact_channels = {{"Cz", 0.5}};
  CHECK_THROWS_AS(spec.validate(), InvalidInput);

  SynthSpec s;
  s.erd_depth = 0.3;
  s.artifact_channels = {{"T8", 5.0}};
  s.seed = 77;
  CHECK(nlohmann::json(s).get<SynthSpec>() == s);

  const auto small = nlohmann::json{{"n_channels", 8}, {"rhythm_channels", {"Ch3"}}}.get<SynthSpec>();
  CHECK(small.channel_names.size() == 8);
  CHECK(small.channel_names[2] == "Ch3");
  CHECK_NOTHROW(small.validate());
}

TEST_CASE("timed scripts") {
  const auto script = TimedScript::repeat({{20.0, BrainState::Walk}, {2.5, BrainState::Idle}}, 50.0);
  CHECK(script.at(0.0) == BrainState::Walk);
  CHECK(script.at(20.0) == BrainState::Idle);
  CHECK(script.at(22.5) == BrainState::Walk);
  CHECK(script.end_s() >= 50.0);
  CHECK_THROWS_AS(script.at(script.end_s() + 1.0), SourceUnderrun);
  const auto alt = TimedScript::alternating(15.0, 120.0);
  CHECK(alt.at(14.9) == BrainState::Idle);
  CHECK(alt.at(15.0) == BrainState::Walk);
  CHECK(alt.end_s() == doctest::Approx(120.0));
}

TEST_CASE("zone-seeking operator") {
  const Track t = Track::make_default();
  std::vector<double> credits(10, 0.0);
  ZoneSeekingPolicy p(0.5);
  CHECK(p.intent(view_at(0.0, BrainState::Idle, t, credits)) == BrainState::Walk);
  CHECK(p.intent(view_at(t.zone_lo(0) - 0.3, BrainState::Walk, t, credits)) == BrainState::Idle);
  CHECK(p.intent(view_at(t.zone_lo(0) - 0.3, BrainState::Idle, t, credits)) == BrainState::Walk);
  CHECK(p.intent(view_at(t.zone_lo(0) + 1.0, BrainState::Walk, t, credits)) == BrainState::Idle);
  credits[0] = 1.0;
  CHECK(p.intent(view_at(t.zone_lo(0) + 1.0, BrainState::Idle, t, credits)) == BrainState::Walk);
  credits[0] = 0.5;
  CHECK(p.intent(view_at(t.zone_hi(0) + 0.5, BrainState::Walk, t, credits)) == BrainState::Walk);
}

TEST_CASE("synthetic source follows the policy") {
  auto src = stream_segments(SynthSpec{}, TimedScript::alternating(1.0, 4.0));
  SessionView v;
  for (int k = 0; k < 8; ++k) {
    v.time_s = 0.5 * k;
    const Segment s = src->next(v);
    CHECK(s.data.rows() == 63);
    CHECK(s.data.cols() == 128);
    REQUIRE(s.intent);
    CHECK(*s.intent == (k / 2 % 2 == 0 ? BrainState::Idle : BrainState::Walk));
  }
  CHECK(src->segments_emitted() == 8);
  v.time_s = 4.0;
  CHECK_THROWS_AS(src->next(v), SourceUnderrun);
}

TEST_CASE("recording source plays segments in order") {
  EegRecording rec;
  rec.channel_names = {"a", "b"};
  rec.samples = testing::random_matrix(2, 300, 1);
  rec.labels = LabelStream({{0.0, BrainState::Walk}});
  RecordingSource src(rec);
  const Segment s0 = src.next({});
  CHECK(s0.data == rec.samples.leftCols(128));
  CHECK(s0.intent == BrainState::Walk);
  const Segment s1 = src.next({});
  CHECK(s1.data == rec.samples.middleCols(128, 128));
  CHECK_THROWS_AS(src.next({}), SourceUnderrun);
}

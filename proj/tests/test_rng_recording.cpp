#include <doctest.h>

#include <set>
#include <sstream>

#include "bciwalk/error.hpp"
#include "bciwalk/recording.hpp"
#include "bciwalk/rng.hpp"
#include "fixtures.hpp"

using namespace bciwalk;

TEST_CASE("splitmix64 matches the reference sequence") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(1) == 0x910a2dec89025cc1ULL);
}

TEST_CASE("raw stream is the standard mt19937_64") {
  // 10000th output for the default seed is fixed by the C++ standard.
  Rng rng(5489u);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  CHECK(x == 9981545732273789042ULL);
}

TEST_CASE("uniform, normal and below stay in range and are reproducible") {
  Rng a(42), b(42);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = a.normal();
    b.normal();
    sum += z;
    sq += z * z;
    const auto k = a.below(7);
    b.below(7);
    REQUIRE(k < 7);
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  CHECK_THROWS_AS(a.below(0), InvalidInput);
}

TEST_CASE("child streams depend only on the parent seed") {
  Rng parent(7);
  const double first = parent.child(3).uniform();
  parent.uniform();
  parent.uniform();
  CHECK(parent.child(3).uniform() == first);
  CHECK(parent.child(4).uniform() != first);
}

TEST_CASE("label stream invariants") {
  CHECK_THROWS_AS(LabelStream({{0.0, BrainState::Idle}, {10.0, BrainState::Idle}}), InvalidInput);
  CHECK_THROWS_AS(LabelStream({{5.0, BrainState::Idle}, {5.0, BrainState::Walk}}), InvalidInput);
  const auto ls = LabelStream::alternating(30.0, 600.0);
  CHECK(ls.transitions().size() == 20);
  CHECK(ls.state_at(0.0) == BrainState::Idle);
  CHECK(ls.state_at(29.99) == BrainState::Idle);
  CHECK(ls.state_at(30.0) == BrainState::Walk);
  const auto segs = ls.segments(600.0);
  REQUIRE(segs.size() == 20);
  CHECK(segs.back().end_s == doctest::Approx(600.0));
}

TEST_CASE("recording container round-trips bit-exactly") {
  EegRecording rec;
  rec.sample_rate_hz = 256.0;
  rec.channel_names = {"Fz", "Cz", "Pz"};
  rec.samples = testing::random_matrix(3, 300, 11).cast<float>().cast<double>();
  rec.labels = LabelStream({{0.0, BrainState::Idle}, {0.5, BrainState::Walk}});
  std::stringstream first;
  write_recording(rec, first);
  const std::string bytes = first.str();
  std::stringstream in(bytes);
  const EegRecording back = read_recording(in);
  CHECK(back.channel_names == rec.channel_names);
  CHECK(back.samples == rec.samples);
  CHECK(back.labels == rec.labels);
  std::stringstream second;
  write_recording(back, second);
  CHECK(second.str() == bytes);
}

TEST_CASE("corrupt recordings are rejected") {
  std::stringstream empty;
  CHECK_THROWS_AS(read_recording(empty), FormatError);
  std::stringstream bad("NOT-A-RECORDING 1\n");
  CHECK_THROWS_AS(read_recording(bad), FormatError);

  EegRecording rec;
  rec.channel_names = {"a", "b"};
  rec.samples = Eigen::MatrixXd::Zero(2, 16);
  std::stringstream full;
  write_recording(rec, full);
  std::string truncated = full.str();
  truncated.resize(truncated.size() - 8);
  std::stringstream tin(truncated);
  CHECK_THROWS_AS(read_recording(tin), FormatError);
}

TEST_CASE("recording validation") {
  EegRecording rec;
  rec.channel_names = {"only"};
  rec.samples = Eigen::MatrixXd::Zero(1, 10);
  CHECK_THROWS_AS(rec.validate(), InvalidInput);
  rec.channel_names = {"a", "b"};
  rec.samples = Eigen::MatrixXd::Zero(2, 10);
  rec.sample_rate_hz = 0.0;
  CHECK_THROWS_AS(rec.validate(), InvalidInput);
  CHECK(default_channel_names().size() == 63);
  std::set<std::string> unique(default_channel_names().begin(), default_channel_names().end());
  CHECK(unique.size() == 63);
}

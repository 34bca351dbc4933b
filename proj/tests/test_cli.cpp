#include <doctest.h>

#include <fstream>
#include <sstream>

#include "bciwalk/cli/commands.hpp"
#include "bciwalk/error.hpp"
#include "bciwalk/model_io.hpp"
#include "fixtures.hpp"

using namespace bciwalk;
using namespace bciwalk::cli;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bciwalk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(run_cli({}).code == kUsageError);
  CHECK(run_cli({"--help"}).code == kOk);
  CHECK(run_cli({"fly"}).code == kUsageError);
  CHECK(run_cli({"train", "--bogus"}).code == kUsageError);

  const auto missing = run_cli({"train", "--recording", "nope.bwr"});
  CHECK(missing.code == kUsageError);
  CHECK(missing.err.find("recording file not found: nope.bwr") != std::string::npos);

  CHECK(run_cli({"train"}).code == kUsageError);
  CHECK(run_cli({"session", "--t-idle", "0.3"}).code == kUsageError);
  CHECK(run_cli({"evaluate", "--result", "none.json", "--t-idle", "0.3", "--t-walk", "0.6"}).code == kUsageError);
  CHECK(run_cli({"evaluate", "--bandwidth", "scott"}).code == kUsageError);
}

TEST_CASE("corrupt inputs are runtime failures") {
  const auto dir = testing::scratch_dir("cli_corrupt");
  std::ofstream(dir / "bad.bwr") << "garbage";
  const auto r = run_cli({"train", "--recording", (dir / "bad.bwr").string(), "--out", (dir / "m.txt").string()});
  CHECK(r.code == kRuntimeFailure);
  CHECK(r.err.find("error:") == 0);
}

TEST_CASE("run config round-trip") {
  const auto dir = testing::scratch_dir("cli_config");
  RunConfig c;
  c.recording = "rec.bwr";
  c.model = "m.txt";
  c.output_dir = "out";
  c.thresholds_override = std::array<double, 2>{0.3, 0.7};
  c.mc_runs = 250;
  c.mc_seed = 9;
  c.bandwidth = BandwidthRule::Botev;
  c.scoring.partial = PartialCredit::Flat;
  c.telemetry.enabled = true;
  c.telemetry.port = 7000;
  save_run_config(c, dir / "c.json");
  CHECK(load_run_config(dir / "c.json") == c);
  save_run_config(RunConfig{}, dir / "d.json");
  CHECK(load_run_config(dir / "d.json") == RunConfig{});

  std::ofstream(dir / "v.json") << R"({"format_version": 99})";
  CHECK_THROWS_AS(load_run_config(dir / "v.json"), UsageError);
  CHECK_THROWS_AS(load_run_config(dir / "none.json"), UsageError);
  CHECK(run_cli({"--config", (dir / "none.json").string(), "evaluate"}).code == kUsageError);
}

TEST_CASE("intent scripts") {
  const auto s = parse_script("walk:20,idle:2.5");
  REQUIRE(s.size() == 2);
  CHECK(s[0] == std::pair<double, BrainState>{20.0, BrainState::Walk});
  CHECK(s[1] == std::pair<double, BrainState>{2.5, BrainState::Idle});
  CHECK_THROWS_AS(parse_script("walk"), UsageError);
  CHECK_THROWS_AS(parse_script("run:3"), UsageError);
  CHECK_THROWS_AS(parse_script("walk:-1"), UsageError);
  CHECK_THROWS_AS(parse_script("walk:3x"), UsageError);
}

TEST_CASE("synth output is reproducible") {
  const auto dir = testing::scratch_dir("cli_synth");
  const auto a = run_cli({"synth", "--out", (dir / "a.bwr").string(), "--seed", "5", "--total-s", "60"});
  const auto b = run_cli({"synth", "--out", (dir / "b.bwr").string(), "--seed", "5", "--total-s", "60"});
  const auto c = run_cli({"synth", "--out", (dir / "c.bwr").string(), "--seed", "6", "--total-s", "60"});
  REQUIRE(a.code == kOk);
  REQUIRE(b.code == kOk);
  CHECK(testing::read_file(dir / "a.bwr") == testing::read_file(dir / "b.bwr"));
  CHECK(testing::read_file(dir / "a.bwr") != testing::read_file(dir / "c.bwr"));
  const EegRecording rec = read_recording(dir / "a.bwr");
  CHECK(rec.duration_s() == doctest::Approx(60.0));
}

TEST_CASE("end-to-end through the command line") {
  const auto dir = testing::scratch_dir("cli_e2e");
  const auto p = [&](const char* f) { return (dir / f).string(); };
  REQUIRE(run_cli({"synth", "--out", p("rec.bwr")}).code == kOk);

  const auto train = run_cli({"train", "--recording", p("rec.bwr"), "--out", p("model.txt"), "--methods", "lda",
                          "--weights-csv", p("weights.csv")});
  REQUIRE(train.code == kOk);
  CHECK(train.out.find("P(correct|f*) = ") != std::string::npos);
  CHECK(testing::read_file(p("weights.csv")).rfind("subspace,channel,bin_lo_hz,weight", 0) == 0);

  const auto cal = run_cli({"calibrate", "--model", p("model.txt"), "--out", p("thresholds.json")});
  REQUIRE(cal.code == kOk);
  CHECK(cal.out.find("T_I = ") != std::string::npos);
  const FsmConfig th = load_thresholds(p("thresholds.json"));
  CHECK(th.t_idle < th.t_walk);

  const auto sess = run_cli({"session", "--model", p("model.txt"), "--thresholds", p("thresholds.json"), "--out",
                         p("result.json"), "--log", p("session.ndjson")});
  REQUIRE(sess.code == kOk);
  const SessionResult live = load_session_result(p("result.json"));
  CHECK(live.finished);

  const auto rep = run_cli({"session", "--replay", p("session.ndjson"), "--out", p("replayed.json")});
  REQUIRE(rep.code == kOk);
  CHECK(testing::read_file(p("replayed.json")) == testing::read_file(p("result.json")));

  const auto ev = run_cli({"evaluate", "--result", p("result.json"), "--thresholds", p("thresholds.json"), "--n", "200",
                       "--ensemble-csv", p("mc.csv"), "--report", p("report.csv")});
  REQUIRE(ev.code == kOk);
  CHECK(ev.out.find("random walk: n = 200") != std::string::npos);
  const std::string report = testing::read_file(p("report.csv"));
  CHECK(report.rfind("session,stops,time_s,finished,composite_pct,c_s,c_t,p_value,purposeful,mc_runs,mc_seed,"
                     "mc_censored,t_idle,t_walk\n",
                     0) == 0);
  std::istringstream csv(testing::read_file(p("mc.csv")));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 200);

  const auto ev2 = run_cli({"evaluate", "--result", p("result.json"), "--thresholds", p("thresholds.json"), "--n", "200",
                        "--ensemble-csv", p("mc2.csv")});
  REQUIRE(ev2.code == kOk);
  CHECK(testing::read_file(p("mc.csv")) == testing::read_file(p("mc2.csv")));
}

TEST_CASE("session needs thresholds") {
  const auto dir = testing::scratch_dir("cli_thresholds");
  save_model(testing::trained_model(), dir / "m.txt");
  const auto r = run_cli({"session", "--model", (dir / "m.txt").string(), "--out", (dir / "r.json").string()});
  CHECK(r.code == kUsageError);
}

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "bciwalk/cli/commands.hpp"
#include "bciwalk/error.hpp"

namespace bciwalk::cli {

namespace {

struct TelemetryFlags {
  bool enabled = false;
  std::optional<std::string> host;
  std::optional<std::uint16_t> port;
  bool realtime = false;
  std::optional<double> wait_s;

  void add(CLI::App* app) {
    app->add_flag("--telemetry", enabled, "Serve NDJSON telemetry over TCP");
    app->add_option("--host", host, "Telemetry bind address");
    app->add_option("--port", port, "Telemetry port (0 picks a free one)");
    app->add_flag("--realtime", realtime, "Pace segments on the wall clock");
    app->add_option("--wait-for-dashboard", wait_s, "Seconds to wait for a client before starting");
  }

  TelemetryEndpoint resolve(const RunConfig& cfg) const {
    TelemetryEndpoint ep = cfg.telemetry;
    if (enabled) ep.enabled = true;
    if (host) ep.host = *host;
    if (port) ep.port = *port;
    if (realtime) ep.realtime = true;
    if (wait_s) ep.wait_for_client_s = *wait_s;
    return ep;
  }
};

struct SourceFlags {
  std::optional<fs::path> recording;
  std::optional<fs::path> synth_spec;
  std::uint64_t seed = 2;
  std::string policy = "zone";
  std::optional<std::string> script;

  void add(CLI::App* app, bool with_policy) {
    app->add_option("--source-recording", recording, "Replay segments from a recording file");
    app->add_option("--synth-spec", synth_spec, "Synthetic subject spec (JSON)");
    app->add_option("--source-seed", seed, "Seed of the synthetic stream")->capture_default_str();
    if (with_policy) app->add_option("--policy", policy, "Synthetic operator: zone")->capture_default_str();
    app->add_option("--script", script, "Repeated intent script, e.g. walk:20,idle:2.5");
  }

  SourceArgs resolve(const RunConfig& cfg) const {
    SourceArgs s;
    s.recording = recording;
    s.synth_spec = synth_spec ? synth_spec : cfg.synth_spec;
    s.seed = seed;
    s.policy = policy;
    s.script = script;
    return s;
  }
};

std::optional<std::array<double, 2>> threshold_pair(const std::optional<double>& ti, const std::optional<double>& tw,
                                                    const RunConfig& cfg) {
  if (ti.has_value() != tw.has_value()) throw UsageError("--t-idle and --t-walk must be given together");
  if (ti) return std::array<double, 2>{*ti, *tw};
  return cfg.thresholds_override;
}

template <class T>
T pick(const std::optional<T>& flag, const std::optional<T>& cfg, const char* what) {
  if (flag) return *flag;
  if (cfg) return *cfg;
  throw UsageError(std::string(what) + " is required");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Idle/walk EEG decoder, closed-loop walking simulator and evaluation"};
  app.require_subcommand(1);
  std::optional<fs::path> config_path;
  app.add_option("--config", config_path, "Run configuration (JSON)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic recording");
  std::optional<fs::path> synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<double> synth_erd;
  double epoch_s = 30.0, total_s = 600.0;
  synth->add_option("--spec", synth_spec, "Synthetic subject spec (JSON)");
  synth->add_option("--out", synth_out, "Output recording path");
  synth->add_option("--seed", synth_seed, "Override the spec seed");
  synth->add_option("--erd-depth", synth_erd, "Override the spec ERD depth");
  synth->add_option("--epoch-s", epoch_s, "Protocol epoch length")->capture_default_str();
  synth->add_option("--total-s", total_s, "Protocol duration")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a decoding model from a labeled recording");
  std::optional<fs::path> train_rec, train_out, train_weights;
  std::optional<std::uint64_t> train_seed, train_shuffle;
  std::vector<std::string> methods{"lda", "aida"};
  train->add_option("--recording", train_rec, "Labeled recording");
  train->add_option("--out", train_out, "Output model path");
  train->add_option("--seed", train_seed, "Seed for trial placement and CV folds");
  train->add_option("--shuffle-labels", train_shuffle, "Permute trial labels with this seed (control run)");
  train->add_option("--weights-csv", train_weights, "Also write the discriminant weight map");
  train->add_option("--methods", methods, "Discriminants to try, in tie-break order")->delimiter(',');

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "Run the calibration stream and persist thresholds");
  std::optional<fs::path> cal_model, cal_out;
  double cal_duration = 120.0, cal_block = 15.0, cal_confirm = 0.0;
  SourceFlags cal_source;
  TelemetryFlags cal_tel;
  calib->add_option("--model", cal_model, "Decoding model");
  calib->add_option("--out", cal_out, "Output thresholds path");
  calib->add_option("--duration", cal_duration, "Calibration length in seconds")->capture_default_str();
  calib->add_option("--block", cal_block, "Prompted block length in seconds")->capture_default_str();
  calib->add_option("--confirm-timeout", cal_confirm, "Seconds to wait for operator thresholds")->capture_default_str();
  cal_source.add(calib, false);
  cal_tel.add(calib);

  // session
  auto* sess = app.add_subcommand("session", "Run or replay a closed-loop session");
  std::optional<fs::path> s_model, s_thresholds, s_replay, s_out, s_log;
  std::optional<double> s_ti, s_tw;
  bool s_paused = false;
  SourceFlags s_source;
  TelemetryFlags s_tel;
  sess->add_option("--model", s_model, "Decoding model");
  sess->add_option("--thresholds", s_thresholds, "Thresholds file");
  sess->add_option("--t-idle", s_ti, "Override T_I");
  sess->add_option("--t-walk", s_tw, "Override T_W");
  sess->add_option("--replay", s_replay, "Recompute the result of a session log");
  sess->add_option("--out", s_out, "Output result path");
  sess->add_option("--log", s_log, "Session log path (NDJSON)");
  sess->add_flag("--start-paused", s_paused, "Wait for a start action");
  s_source.add(sess, true);
  s_tel.add(sess);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Random-walk baseline, p-values and composite scores");
  std::vector<fs::path> e_results;
  std::optional<fs::path> e_thresholds, e_csv, e_report;
  std::optional<double> e_ti, e_tw;
  std::optional<int> e_n;
  std::optional<std::uint64_t> e_seed;
  std::optional<std::string> e_bw;
  eval->add_option("--result", e_results, "Session result file(s)");
  eval->add_option("--thresholds", e_thresholds, "Thresholds used by the sessions");
  eval->add_option("--t-idle", e_ti, "Override T_I");
  eval->add_option("--t-walk", e_tw, "Override T_W");
  eval->add_option("--n", e_n, "Monte Carlo runs");
  eval->add_option("--seed", e_seed, "Monte Carlo seed");
  eval->add_option("--bandwidth", e_bw, "silverman or botev");
  eval->add_option("--ensemble-csv", e_csv, "Write the random-walk ensemble");
  eval->add_option("--report", e_report, "Write the evaluation report (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    const RunConfig cfg = config_path ? load_run_config(*config_path) : RunConfig{};
    const fs::path dir = cfg.output_dir;

    if (*synth) {
      SynthArgs a;
      a.spec = synth_spec ? synth_spec : cfg.synth_spec;
      a.out = synth_out.value_or(dir / "recording.bwr");
      a.seed = synth_seed;
      a.erd_depth = synth_erd;
      a.epoch_s = epoch_s;
      a.total_s = total_s;
      cmd_synth(a, out);
    } else if (*train) {
      TrainArgs a;
      a.recording = pick(train_rec, cfg.recording, "--recording");
      a.out = train_out.value_or(dir / "model.txt");
      a.seed = train_seed.value_or(cfg.seed);
      a.shuffle_labels_seed = train_shuffle;
      a.weights_csv = train_weights;
      a.methods = methods;
      cmd_train(a, out);
    } else if (*calib) {
      CalibrateArgs a;
      a.model = pick(cal_model, cfg.model, "--model");
      a.out = cal_out.value_or(dir / "thresholds.json");
      a.source = cal_source.resolve(cfg);
      a.duration_s = cal_duration;
      a.block_s = cal_block;
      a.confirm_timeout_s = cal_confirm;
      a.telemetry = cal_tel.resolve(cfg);
      cmd_calibrate(a, out, err);
    } else if (*sess) {
      SessionArgs a;
      a.model = s_model ? s_model : cfg.model;
      a.thresholds = s_thresholds ? s_thresholds : cfg.thresholds;
      a.thresholds_override = threshold_pair(s_ti, s_tw, cfg);
      a.source = s_source.resolve(cfg);
      a.replay = s_replay;
      a.out = s_out.value_or(dir / "session_result.json");
      a.log = s_replay ? std::nullopt : std::optional<fs::path>(s_log.value_or(dir / "session.ndjson"));
      a.track = cfg.track;
      a.scoring = cfg.scoring;
      a.start_paused = s_paused;
      a.telemetry = s_tel.resolve(cfg);
      cmd_session(a, out);
    } else if (*eval) {
      EvaluateArgs a;
      a.results = e_results.empty() ? std::vector<fs::path>{dir / "session_result.json"} : e_results;
      a.thresholds = e_thresholds ? e_thresholds : cfg.thresholds;
      a.thresholds_override = threshold_pair(e_ti, e_tw, cfg);
      a.track = cfg.track;
      a.scoring = cfg.scoring;
      a.n = e_n.value_or(cfg.mc_runs);
      a.seed = e_seed.value_or(cfg.mc_seed);
      a.bandwidth = e_bw ? parse_bandwidth_rule(*e_bw) : cfg.bandwidth;
      a.ensemble_csv = e_csv;
      a.report_csv = e_report;
      cmd_evaluate(a, out, err);
    }
    return kOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace bciwalk::cli

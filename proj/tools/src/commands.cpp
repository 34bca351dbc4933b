#include "bciwalk/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "bciwalk/decoder.hpp"
#include "bciwalk/error.hpp"
#include "bciwalk/model_io.hpp"
#include "bciwalk/recording.hpp"
#include "bciwalk/session.hpp"
#include "bciwalk/synth.hpp"
#include "bciwalk/telemetry_server.hpp"

namespace bciwalk::cli {

using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::optional<fs::path> get_path(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return fs::path(j[key].get<std::string>());
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  j = json::object();
  j["format_version"] = kRunConfigVersion;
  if (c.recording) j["recording"] = c.recording->string();
  if (c.model) j["model"] = c.model->string();
  if (c.thresholds) j["thresholds"] = c.thresholds->string();
  if (c.synth_spec) j["synth_spec"] = c.synth_spec->string();
  j["output_dir"] = c.output_dir.string();
  if (c.thresholds_override)
    j["thresholds_override"] = {{"t_idle", (*c.thresholds_override)[0]}, {"t_walk", (*c.thresholds_override)[1]}};
  j["track"] = c.track;
  j["scoring"] = c.scoring;
  j["monte_carlo"] = {{"n", c.mc_runs}, {"seed", c.mc_seed}, {"bandwidth", to_string(c.bandwidth)}};
  j["seed"] = c.seed;
  j["telemetry"] = {{"enabled", c.telemetry.enabled},
                    {"host", c.telemetry.host},
                    {"port", c.telemetry.port},
                    {"realtime", c.telemetry.realtime},
                    {"wait_for_client_s", c.telemetry.wait_for_client_s}};
}

void from_json(const json& j, RunConfig& c) {
  const int version = j.value("format_version", 0);
  if (version != kRunConfigVersion)
    throw UsageError("unsupported run config format_version " + std::to_string(version));
  const RunConfig d;
  c.recording = get_path(j, "recording");
  c.model = get_path(j, "model");
  c.thresholds = get_path(j, "thresholds");
  c.synth_spec = get_path(j, "synth_spec");
  c.output_dir = j.value("output_dir", d.output_dir.string());
  c.thresholds_override.reset();
  if (j.contains("thresholds_override")) {
    const auto& t = j["thresholds_override"];
    c.thresholds_override = std::array<double, 2>{t.at("t_idle").get<double>(), t.at("t_walk").get<double>()};
  }
  c.track = j.contains("track") ? j["track"].get<Track>() : d.track;
  c.scoring = j.contains("scoring") ? j["scoring"].get<ScoringConfig>() : d.scoring;
  const json mc = j.value("monte_carlo", json::object());
  c.mc_runs = mc.value("n", d.mc_runs);
  c.mc_seed = mc.value("seed", d.mc_seed);
  c.bandwidth = parse_bandwidth_rule(mc.value("bandwidth", std::string(to_string(d.bandwidth))));
  c.seed = j.value("seed", d.seed);
  const json tel = j.value("telemetry", json::object());
  c.telemetry.enabled = tel.value("enabled", d.telemetry.enabled);
  c.telemetry.host = tel.value("host", d.telemetry.host);
  c.telemetry.port = tel.value("port", d.telemetry.port);
  c.telemetry.realtime = tel.value("realtime", d.telemetry.realtime);
  c.telemetry.wait_for_client_s = tel.value("wait_for_client_s", d.telemetry.wait_for_client_s);
}

RunConfig load_run_config(const fs::path& path) {
  require_file(path, "run config");
  std::ifstream in(path);
  try {
    return json::parse(in).get<RunConfig>();
  } catch (const json::exception& e) {
    throw UsageError("run config '" + path.string() + "': " + e.what());
  } catch (const InvalidInput& e) {
    throw UsageError("run config '" + path.string() + "': " + e.what());
  }
}

void save_run_config(const RunConfig& c, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << json(c).dump(2) << '\n';
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " file not found: " + path.string());
}

std::vector<std::pair<double, BrainState>> parse_script(const std::string& text) {
  std::vector<std::pair<double, BrainState>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("script item '" + item + "' is not state:seconds");
    try {
      const BrainState s = parse_brain_state(item.substr(0, colon));
      std::size_t used = 0;
      const std::string num = item.substr(colon + 1);
      const double len = std::stod(num, &used);
      if (used != num.size() || !(len > 0.0)) throw UsageError("bad duration in script item '" + item + "'");
      out.emplace_back(len, s);
    } catch (const std::invalid_argument&) {
      throw UsageError("bad script item '" + item + "'");
    } catch (const FormatError&) {
      throw UsageError("bad state in script item '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty intent script");
  return out;
}

namespace {

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

SynthSpec load_spec_or_default(const std::optional<fs::path>& path) {
  if (!path) return SynthSpec{};
  require_file(*path, "synth spec");
  try {
    return load_synth_spec(*path);
  } catch (const InvalidInput& e) {
    throw UsageError("synth spec '" + path->string() + "': " + e.what());
  }
}

/// Owns the live endpoint and the lossless log for one command.
struct TelemetryHub {
  std::unique_ptr<TelemetryServer> server;
  std::unique_ptr<std::ofstream> log_file;
  std::unique_ptr<StreamSink> log_sink;
  FanOut fan;

  TelemetryHub(const TelemetryEndpoint& ep, const std::optional<fs::path>& log, std::ostream& out) {
    if (log) {
      ensure_parent(*log);
      log_file = std::make_unique<std::ofstream>(*log, std::ios::binary);
      if (!*log_file) throw std::runtime_error("cannot write session log '" + log->string() + "'");
      log_sink = std::make_unique<StreamSink>(*log_file);
      fan.add(log_sink.get());
    }
    if (ep.enabled) {
      server = std::make_unique<TelemetryServer>(ep.host, ep.port);
      out << "telemetry listening on " << ep.host << ':' << server->port() << '\n' << std::flush;
      fan.add(server.get());
      if (ep.wait_for_client_s > 0.0)
        server->wait_for_clients(1, std::chrono::milliseconds(static_cast<long long>(ep.wait_for_client_s * 1000.0)));
    }
  }
  ~TelemetryHub() {
    if (server) {
      server->flush(std::chrono::milliseconds(2000));
      server->stop();
    }
  }
  TelemetrySink* sink() { return fan.empty() ? nullptr : &fan; }
  ActionSource* actions() { return server.get(); }
};

std::unique_ptr<SegmentSource> make_source(const SourceArgs& a, double script_total_s,
                                           std::optional<TimedScript> default_script = std::nullopt) {
  if (a.recording) {
    require_file(*a.recording, "recording");
    return std::make_unique<RecordingSource>(read_recording(*a.recording));
  }
  SynthSpec spec = load_spec_or_default(a.synth_spec);
  spec.seed = a.seed;
  std::shared_ptr<IntentPolicy> policy;
  if (a.script)
    policy = std::make_shared<TimedScript>(TimedScript::repeat(parse_script(*a.script), script_total_s));
  else if (default_script)
    policy = std::make_shared<TimedScript>(*default_script);
  else if (a.policy == "zone")
    policy = std::make_shared<ZoneSeekingPolicy>();
  else
    throw UsageError("unknown intent policy '" + a.policy + "' (expected zone, or give --script)");
  return std::make_unique<SyntheticSource>(spec, std::move(policy));
}

std::unique_ptr<Clock> make_clock(const TelemetryEndpoint& ep) {
  if (ep.realtime) return std::make_unique<RealTimeClock>();
  return std::make_unique<SimulatedClock>();
}

FsmConfig resolve_thresholds(const std::optional<fs::path>& file, const std::optional<std::array<double, 2>>& over) {
  FsmConfig cfg;
  if (file) {
    require_file(*file, "thresholds");
    cfg = load_thresholds(*file);
  }
  if (over) {
    cfg.t_idle = (*over)[0];
    cfg.t_walk = (*over)[1];
  }
  if (!file && !over) throw UsageError("thresholds required: give --thresholds or --t-idle/--t-walk");
  try {
    cfg.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("thresholds: ") + e.what());
  }
  return cfg;
}

}  // namespace

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec = load_spec_or_default(a.spec);
  if (a.seed) spec.seed = *a.seed;
  if (a.erd_depth) spec.erd_depth = *a.erd_depth;
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("synth spec: ") + e.what());
  }
  const EegRecording rec = generate_recording(spec, ProtocolSpec{a.epoch_s, a.total_s, BrainState::Idle});
  ensure_parent(a.out);
  write_recording(rec, a.out);
  out << "wrote " << a.out.string() << ": " << rec.n_channels() << " channels, " << rec.duration_s() << " s at "
      << rec.sample_rate_hz << " Hz, erd_depth " << spec.erd_depth << ", seed " << spec.seed << '\n';
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  require_file(a.recording, "recording");
  const EegRecording rec = read_recording(a.recording);
  TrainingConfig cfg;
  cfg.seed = a.seed;
  cfg.shuffle_labels_seed = a.shuffle_labels_seed;
  cfg.methods.clear();
  for (const auto& m : a.methods) {
    try {
      cfg.methods.push_back(parse_discriminant_method(m));
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
  }
  const TrainingReport report = train_model(rec, cfg);
  const DecodingModel& m = report.model;
  ensure_parent(a.out);
  save_model(m, a.out);
  if (a.weights_csv) {
    ensure_parent(*a.weights_csv);
    std::ofstream w(*a.weights_csv, std::ios::binary);
    if (!w) throw std::runtime_error("cannot write '" + a.weights_csv->string() + "'");
    write_weight_map_csv(m, w);
  }
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  for (const auto& o : report.outcomes)
    out << to_string(o.method) << ": band " << o.search.band.lo_hz << "-" << o.search.band.hi_hz << " Hz, "
        << fmt("%.1f", 100.0 * o.search.cv.mean) << " %\n";
  const std::size_t n = m.trial_counts[0] + m.trial_counts[1];
  out << "P(correct|f*) = " << fmt("%.1f", 100.0 * m.cv_accuracy_mean) << " +/- "
      << fmt("%.1f", 100.0 * m.cv_accuracy_std) << " %   p-value = " << fmt("%.3g", m.p_value) << "   (n = " << n
      << ")\n";
  out << "method " << to_string(m.method()) << ", band " << m.band.lo_hz << "-" << m.band.hi_hz << " Hz, "
      << m.channel_mask.retained.size() << " channels retained\n";
  out << "wrote " << a.out.string() << '\n';
}

void cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.model, "model");
  const DecodingModel model = load_model(a.model);
  std::unique_ptr<SegmentSource> source =
      make_source(a.source, a.duration_s, TimedScript::alternating(a.block_s, a.duration_s + a.block_s));
  TelemetryHub hub(a.telemetry, std::nullopt, out);
  const auto clock = make_clock(a.telemetry);
  if (hub.sink()) hub.sink()->publish(telemetry::session_start(0.0, "calibration", Track::make_default(), FsmConfig{},
                                                               ScoringConfig{}));
  CalibrationOptions opts;
  opts.duration_s = a.duration_s;
  opts.telemetry = hub.sink();
  opts.clock = clock.get();
  const CalibrationRun run = run_calibration(model, *source, opts);
  const CalibrationReport& r = run.report;

  FsmConfig th = r.thresholds();
  if (hub.server && a.confirm_timeout_s > 0.0) {
    // The operator may replace the suggestion before it is persisted.
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.confirm_timeout_s);
    bool confirmed = false;
    while (!confirmed && std::chrono::steady_clock::now() < deadline) {
      for (const auto& act : hub.server->poll_actions()) {
        if (act.kind != OperatorAction::Kind::SetThresholds) continue;
        FsmConfig c = th;
        c.t_idle = act.t_idle;
        c.t_walk = act.t_walk;
        try {
          c.validate();
          th = c;
          confirmed = true;
          hub.sink()->publish(telemetry::threshold_update(a.duration_s, th.t_idle, th.t_walk, true, "operator"));
        } catch (const InvalidInput& e) {
          hub.sink()->publish(
              telemetry::threshold_update(a.duration_s, th.t_idle, th.t_walk, false, "operator", e.what()));
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  if (!r.separable)
    err << "warning: idle and walk posteriors are not separable (median idle " << r.suggested_t_idle
        << " >= median walk " << r.suggested_t_walk << "); thresholds persisted anyway\n";
  auto q = [](const std::array<double, 3>& v) {
    return fmt("%.3f", v[0]) + " " + fmt("%.3f", v[1]) + " " + fmt("%.3f", v[2]);
  };
  out << "idle quartiles " << q(r.idle_quartiles) << "  (n = " << r.idle_posteriors.size() << ")\n";
  out << "walk quartiles " << q(r.walk_quartiles) << "  (n = " << r.walk_posteriors.size() << ")\n";
  out << "T_I = " << fmt("%.6g", th.t_idle) << "  T_W = " << fmt("%.6g", th.t_walk) << '\n';
  ensure_parent(a.out);
  save_thresholds(th, a.out);
  out << "wrote " << a.out.string() << '\n';
}

SessionResult cmd_session(const SessionArgs& a, std::ostream& out) {
  SessionResult result;
  if (a.replay) {
    require_file(*a.replay, "session log");
    result = replay_session(*a.replay);
  } else {
    if (!a.model) throw UsageError("--model is required for a live session");
    require_file(*a.model, "model");
    const DecodingModel model = load_model(*a.model);
    SessionOptions opts;
    opts.track = a.track;
    opts.scoring = a.scoring;
    opts.fsm = resolve_thresholds(a.thresholds, a.thresholds_override);
    opts.start_paused = a.start_paused;
    std::unique_ptr<SegmentSource> source = make_source(a.source, a.scoring.time_limit_s + 1.0);
    TelemetryHub hub(a.telemetry, a.log, out);
    const auto clock = make_clock(a.telemetry);
    opts.telemetry = hub.sink();
    opts.actions = hub.actions();
    opts.clock = clock.get();
    result = run_session(model, *source, opts);
  }
  ensure_parent(a.out);
  save_session_result(result, a.out);
  out << "stops " << fmt("%.2f", result.stops_score) << " / " << a.track.n_npcs() << "   completion "
      << fmt("%.1f", result.completion_time_s) << " s   " << (result.finished ? "finished" : "timed out") << '\n';
  out << "wrote " << a.out.string() << '\n';
  return result;
}

namespace {

struct EvalRow {
  fs::path path;
  SessionResult result;
  std::optional<CompositeScore> composite;
  std::string composite_note;
  Purposefulness purpose;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.results.empty()) throw UsageError("at least one --result is required");
  if (a.n <= 0) throw UsageError("--n must be positive");
  for (const auto& p : a.results) require_file(p, "session result");
  const FsmConfig fsm = resolve_thresholds(a.thresholds, a.thresholds_override);

  const McEnsemble ens = random_walk_mc(fsm, a.track, a.n, a.seed, a.scoring);
  if (a.ensemble_csv) {
    ensure_parent(*a.ensemble_csv);
    std::ofstream f(*a.ensemble_csv, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + a.ensemble_csv->string() + "'");
    write_ensemble_csv(ens, f);
  }
  const Kde2d kde = fit_kde(ens, a.bandwidth);
  for (const auto& w : kde.warnings()) err << "warning: " << w << '\n';

  CompositeConstants k;
  k.t_min = a.track.min_completion_time_s(a.scoring.full_dwell_s);
  k.t_max = a.scoring.time_limit_s;
  k.s_max = static_cast<double>(a.track.n_npcs());

  std::vector<EvalRow> rows;
  for (const auto& p : a.results) {
    EvalRow row;
    row.path = p;
    row.result = load_session_result(p);
    try {
      row.composite = composite(row.result.stops_score, row.result.completion_time_s, k);
    } catch (const InvalidInput& e) {
      row.composite_note = e.what();
    }
    row.purpose = purposefulness(row.result, kde);
    rows.push_back(std::move(row));
  }

  std::vector<double> ens_s, ens_t;
  for (const auto& s : ens.samples) {
    ens_s.push_back(s.s);
    ens_t.push_back(s.t);
  }
  out << "random walk: n = " << ens.n_runs() << ", seed " << ens.seed << ", T_I = " << fsm.t_idle
      << ", T_W = " << fsm.t_walk << ", censored " << ens.n_censored() << '\n';
  out << "  stops " << fmt("%.2f", mean_of(ens_s)) << " +/- " << fmt("%.2f", std_of(ens_s)) << ", time "
      << fmt("%.1f", mean_of(ens_t)) << " +/- " << fmt("%.1f", std_of(ens_t)) << " s, bandwidth ("
      << fmt("%.4g", kde.bandwidth()[0]) << ", " << fmt("%.4g", kde.bandwidth()[1]) << ") " << to_string(a.bandwidth)
      << '\n';
  out << "composite constants: s_max = " << k.s_max << ", t_min = " << k.t_min << " s, t_max = " << k.t_max << " s\n";

  std::vector<double> ss, ts, cs;
  for (const auto& r : rows) {
    out << r.path.string() << ": stops " << fmt("%.2f", r.result.stops_score) << ", time "
        << fmt("%.1f", r.result.completion_time_s) << " s, " << (r.result.finished ? "finished" : "timed out")
        << ", composite ";
    if (r.composite)
      out << fmt("%.1f", 100.0 * r.composite->c) << " %";
    else
      out << "undefined (" << r.composite_note << ")";
    out << ", p = " << fmt("%.4g", r.purpose.p) << ", " << (r.purpose.purposeful ? "purposeful" : "not purposeful")
        << '\n';
    ss.push_back(r.result.stops_score);
    ts.push_back(r.result.completion_time_s);
    if (r.composite) cs.push_back(100.0 * r.composite->c);
  }
  if (rows.size() > 1) {
    out << "sessions: n = " << rows.size() << ", stops " << fmt("%.1f", mean_of(ss)) << " +/- "
        << fmt("%.1f", std_of(ss)) << ", time " << fmt("%.0f", mean_of(ts)) << " +/- " << fmt("%.0f", std_of(ts))
        << " s, composite " << fmt("%.1f", mean_of(cs)) << " +/- " << fmt("%.1f", std_of(cs)) << " %\n";
  }

  if (a.report_csv) {
    ensure_parent(*a.report_csv);
    std::ofstream f(*a.report_csv, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + a.report_csv->string() + "'");
    f << "session,stops,time_s,finished,composite_pct,c_s,c_t,p_value,purposeful,mc_runs,mc_seed,mc_censored,"
         "t_idle,t_walk\n";
    char buf[512];
    for (const auto& r : rows) {
      std::string comp = ",,";
      if (r.composite)
        comp = fmt("%.6f", 100.0 * r.composite->c) + "," + fmt("%.6f", r.composite->c_s) + "," +
               fmt("%.6f", r.composite->c_t);
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%d,%s,%.17g,%d,%zu,%llu,%zu,%.17g,%.17g\n",
                    r.path.filename().string().c_str(), r.result.stops_score, r.result.completion_time_s,
                    r.result.finished ? 1 : 0, comp.c_str(), r.purpose.p, r.purpose.purposeful ? 1 : 0,
                    ens.n_runs(), static_cast<unsigned long long>(ens.seed), ens.n_censored(), fsm.t_idle,
                    fsm.t_walk);
      f << buf;
    }
  }
}

}  // namespace bciwalk::cli

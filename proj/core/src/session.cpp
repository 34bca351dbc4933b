#include "bciwalk/session.hpp"

#include <cmath>
#include <fstream>

#include "bciwalk/error.hpp"

namespace bciwalk {

RecordingSource::RecordingSource(EegRecording rec, double segment_len_s)
    : rec_(std::move(rec)),
      segment_samples_(static_cast<Eigen::Index>(std::llround(segment_len_s * rec_.sample_rate_hz))) {
  rec_.validate();
  if (segment_samples_ <= 0) throw InvalidInput("segment length must be positive");
}

std::size_t RecordingSource::remaining() const {
  return static_cast<std::size_t>((rec_.n_samples() - cursor_) / segment_samples_);
}

Segment RecordingSource::next(const SessionView&) {
  if (cursor_ + segment_samples_ > rec_.n_samples())
    throw SourceUnderrun("recording exhausted after " +
                         std::to_string(static_cast<double>(cursor_) / rec_.sample_rate_hz) + " s");
  Segment s;
  s.data = rec_.samples.middleCols(cursor_, segment_samples_);
  if (rec_.labels) s.intent = rec_.labels->state_at(static_cast<double>(cursor_) / rec_.sample_rate_hz);
  cursor_ += segment_samples_;
  return s;
}

namespace {

void check_montage(const DecodingModel& model, const SegmentSource& source) {
  if (source.channel_names() != model.channel_names)
    throw InvalidInput("source montage does not match the model's channel list");
  if (std::abs(source.sample_rate_hz() - model.sample_rate_hz) > 1e-9)
    throw InvalidInput("source sample rate " + std::to_string(source.sample_rate_hz()) +
                       " Hz differs from the model's " + std::to_string(model.sample_rate_hz) + " Hz");
}

void publish(TelemetrySink* sink, const TelemetryMessage& msg) {
  if (sink) sink->publish(msg);
}

// Pause and start are acknowledged even when they change nothing.
void apply_actions(ActionSource* actions, SessionRunner& runner, bool& paused, double t, TelemetrySink* sink) {
  if (!actions) return;
  for (const auto& a : actions->poll_actions()) {
    switch (a.kind) {
      case OperatorAction::Kind::SetThresholds: {
        FsmConfig candidate = runner.fsm_config();
        candidate.t_idle = a.t_idle;
        candidate.t_walk = a.t_walk;
        try {
          candidate.validate();
          runner.set_thresholds(a.t_idle, a.t_walk);
          publish(sink, telemetry::threshold_update(t, a.t_idle, a.t_walk, true, "operator"));
        } catch (const InvalidInput& e) {
          const auto& cur = runner.fsm_config();
          publish(sink, telemetry::threshold_update(t, cur.t_idle, cur.t_walk, false, "operator", e.what()));
        }
        break;
      }
      case OperatorAction::Kind::Pause:
        paused = true;
        publish(sink, telemetry::control(t, "pause", true));
        break;
      case OperatorAction::Kind::Start:
        paused = false;
        publish(sink, telemetry::control(t, "start", true));
        break;
      case OperatorAction::Kind::Reset:
        runner.reset();
        publish(sink, telemetry::control(t, "reset", true));
        break;
    }
  }
}

std::size_t credited_count(const std::vector<double>& credits) {
  std::size_t n = 0;
  for (double c : credits)
    if (c > 0.0) ++n;
  return n;
}

}  // namespace

SessionResult run_session(const DecodingModel& model, SegmentSource& source, const SessionOptions& opts) {
  opts.fsm.validate();
  check_montage(model, source);
  const OnlineDecoder decoder(model);
  SimulatedClock default_clock;
  Clock& clock = opts.clock ? *opts.clock : default_clock;
  SessionRunner runner(opts.track, opts.fsm, opts.scoring);
  TelemetrySink* sink = opts.telemetry;
  const double dt = opts.fsm.segment_len_s;

  publish(sink, telemetry::session_start(0.0, "session", opts.track, opts.fsm, opts.scoring));
  publish(sink, telemetry::threshold_update(0.0, opts.fsm.t_idle, opts.fsm.t_walk, true, "config"));

  bool paused = opts.start_paused;
  std::size_t segment_index = 0;
  double last_score = -1.0;
  std::optional<std::size_t> last_zone;
  while (!runner.done()) {
    const double t_start = static_cast<double>(segment_index) * dt;
    const double t_end = t_start + dt;
    clock.wait_until(t_end);
    apply_actions(opts.actions, runner, paused, t_end, sink);

    const CourseSim& sim = runner.sim();
    const SessionView view{t_start, sim.position_m(), runner.fsm_state().state, &sim.track(), &sim.credits()};
    Segment seg = source.next(view);
    ++segment_index;
    if (paused) continue;

    const FeatureValue fv = decoder.decode(seg.data);
    const auto tick = runner.tick(fv.p_walk, seg.intent);
    publish(sink, telemetry::posterior(t_end, runner.sim().ticks(), fv.p_walk, tick.smoothed, seg.intent));
    publish(sink, telemetry::state(t_end, tick.previous, tick.state));
    publish(sink, telemetry::avatar_position(t_end, runner.sim().position_m(), tick.state));

    const auto zone = runner.sim().track().zone_at(runner.sim().position_m());
    if (last_zone && last_zone != zone)
      publish(sink, telemetry::npc_status(t_end, *last_zone, runner.sim().credits()[*last_zone], 0.0, false));
    if (zone) {
      const auto dwells = runner.sim().dwells();
      double dwell = 0.0;
      if (!dwells.empty() && dwells.back().npc == *zone && dwells.back().exit_s == runner.sim().time_s())
        dwell = dwells.back().exit_s - dwells.back().entry_s;
      publish(sink, telemetry::npc_status(t_end, *zone, runner.sim().credits()[*zone], dwell, true));
    }
    last_zone = zone;
    const double score = runner.sim().score();
    if (score != last_score) {
      publish(sink, telemetry::score(t_end, score, credited_count(runner.sim().credits())));
      last_score = score;
    }
  }
  SessionResult result = runner.result();
  publish(sink, telemetry::session_end(static_cast<double>(segment_index) * dt, result));
  return result;
}

std::optional<SessionResult> logged_result(const std::vector<TelemetryMessage>& log) {
  for (auto it = log.rbegin(); it != log.rend(); ++it)
    if (it->type == "session_end") return it->payload.at("result").get<SessionResult>();
  return std::nullopt;
}

SessionResult replay_session(const std::vector<TelemetryMessage>& log) {
  std::optional<SessionRunner> runner;
  try {
    for (const auto& m : log) {
      if (m.type == "session_start") {
        runner.emplace(m.payload.at("track").get<Track>(), m.payload.at("fsm").get<FsmConfig>(),
                       m.payload.at("scoring").get<ScoringConfig>());
        continue;
      }
      if (!runner) continue;
      if (m.type == "threshold_update") {
        if (m.payload.value("accepted", false))
          runner->set_thresholds(m.payload.at("t_idle").get<double>(), m.payload.at("t_walk").get<double>());
      } else if (m.type == "control") {
        if (m.payload.value("accepted", false) && m.payload.value("action", std::string()) == "reset") runner->reset();
      } else if (m.type == "posterior") {
        std::optional<BrainState> intent;
        if (m.payload.contains("intent") && m.payload["intent"].is_string())
          intent = parse_brain_state(m.payload["intent"].get<std::string>());
        runner->tick(m.payload.at("p_walk").get<double>(), intent);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("session log: ") + e.what());
  }
  if (!runner) throw FormatError("session log has no session_start message");
  return runner->result();
}

SessionResult replay_session(std::istream& log) { return replay_session(read_telemetry_log(log)); }

SessionResult replay_session(const std::filesystem::path& log_path) {
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot open session log '" + log_path.string() + "'");
  return replay_session(in);
}

CalibrationRun run_calibration(const DecodingModel& model, SegmentSource& source, const CalibrationOptions& opts) {
  opts.fsm.validate_ordering();
  check_montage(model, source);
  if (!(opts.duration_s > 0.0)) throw InvalidInput("calibration duration must be positive");
  const OnlineDecoder decoder(model);
  SimulatedClock default_clock;
  Clock& clock = opts.clock ? *opts.clock : default_clock;
  const double dt = opts.fsm.segment_len_s;
  const auto n_segments = static_cast<std::size_t>(std::llround(opts.duration_s / dt));
  TelemetrySink* sink = opts.telemetry;

  CalibrationRun run;
  PosteriorWindow history(opts.fsm.history_len());
  bool seen[2] = {false, false};
  for (std::size_t i = 0; i < n_segments; ++i) {
    const double t_start = static_cast<double>(i) * dt;
    clock.wait_until(t_start + dt);
    const SessionView view{t_start, 0.0, BrainState::Idle, nullptr, nullptr};
    const Segment seg = source.next(view);
    if (!seg.intent) throw InvalidInput("calibration source must report the prompted condition");
    const double p = decoder.process_segment(seg.data);
    history.push(p);
    const double smoothed = history.mean();
    run.posteriors.push_back(smoothed);
    run.conditions.push_back(*seg.intent);
    seen[index_of(*seg.intent)] = true;
    publish(sink, telemetry::posterior(t_start + dt, i + 1, p, smoothed, seg.intent));
    if (sink && seen[0] && seen[1])
      sink->publish(telemetry::calibration_histogram(t_start + dt, calibrate(run.posteriors, run.conditions), false));
  }
  run.report = calibrate(run.posteriors, run.conditions);
  publish(sink, telemetry::calibration_histogram(static_cast<double>(n_segments) * dt, run.report, true));
  return run;
}

}  // namespace bciwalk

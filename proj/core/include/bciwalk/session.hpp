#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "bciwalk/decoder.hpp"
#include "bciwalk/online.hpp"
#include "bciwalk/source.hpp"
#include "bciwalk/telemetry.hpp"
#include "bciwalk/vre.hpp"

namespace bciwalk {

struct SessionOptions {
  Track track = Track::make_default();
  FsmConfig fsm;
  ScoringConfig scoring;
  TelemetrySink* telemetry = nullptr;
  ActionSource* actions = nullptr;
  /// Simulated time when null.
  Clock* clock = nullptr;
  bool start_paused = false;
};

/// Closed loop at one segment per tick: acquire, decode, smooth, state
/// machine, simulator, telemetry. Operator actions are applied before the
/// segment they precede is decoded, so they affect the next FSM step.
/// While paused the clock and the source keep running but segments are
/// discarded and the course is frozen. Throws SourceUnderrun when the
/// source runs dry.
SessionResult run_session(const DecodingModel& model, SegmentSource& source, const SessionOptions& opts = {});

/// Recomputes a session from its log: the session_start configuration,
/// every accepted threshold change and reset, and the logged raw
/// posteriors, fed through the same runner.
SessionResult replay_session(const std::vector<TelemetryMessage>& log);
SessionResult replay_session(std::istream& log);
SessionResult replay_session(const std::filesystem::path& log_path);

/// The session_end result recorded in a log, if any.
std::optional<SessionResult> logged_result(const std::vector<TelemetryMessage>& log);

struct CalibrationOptions {
  double duration_s = 120.0;
  FsmConfig fsm;  // smoothing used for the calibration posteriors
  TelemetrySink* telemetry = nullptr;
  Clock* clock = nullptr;
};

struct CalibrationRun {
  CalibrationReport report;
  std::vector<double> posteriors;  // smoothed, one per segment
  std::vector<BrainState> conditions;
};

/// Decodes a prompted stream (the source must report intent) and builds
/// the calibration report from the smoothed posteriors, publishing a
/// histogram after every segment once both conditions have been seen.
CalibrationRun run_calibration(const DecodingModel& model, SegmentSource& source,
                               const CalibrationOptions& opts = {});

}  // namespace bciwalk

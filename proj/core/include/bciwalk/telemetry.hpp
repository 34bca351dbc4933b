#pragma once

#include <iosfwd>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bciwalk/online.hpp"
#include "bciwalk/vre.hpp"

namespace bciwalk {

inline constexpr int kTelemetrySchemaVersion = 1;

/// One newline-delimited JSON message: {"type", "session_time_s", "payload"}.
struct TelemetryMessage {
  std::string type;
  double session_time_s = 0.0;
  nlohmann::json payload = nlohmann::json::object();

  /// Single line, no trailing newline. Keys are emitted in a fixed order.
  std::string to_line() const;
  /// Throws FormatError on malformed JSON or a missing envelope field.
  static TelemetryMessage parse(std::string_view line);
};

namespace telemetry {

// Outgoing message builders; payload layouts are in docs/telemetry_schema.json.
TelemetryMessage session_start(double t, std::string_view mode, const Track& track, const FsmConfig& fsm,
                               const ScoringConfig& scoring);
TelemetryMessage posterior(double t, std::size_t tick, double p_walk, double smoothed,
                           std::optional<BrainState> intent);
TelemetryMessage state(double t, BrainState previous, BrainState current);
TelemetryMessage calibration_histogram(double t, const CalibrationReport& report, bool final_report);
TelemetryMessage avatar_position(double t, double position_m, BrainState state);
TelemetryMessage npc_status(double t, std::size_t npc, double credit, double dwell_s, bool inside);
TelemetryMessage score(double t, double stops_score, std::size_t npcs_credited);
TelemetryMessage session_end(double t, const SessionResult& result);
TelemetryMessage threshold_update(double t, double t_idle, double t_walk, bool accepted,
                                  std::string_view source, std::string_view reason = {});
TelemetryMessage control(double t, std::string_view action, bool accepted, std::string_view reason = {});

}  // namespace telemetry

/// Operator request arriving from a dashboard.
struct OperatorAction {
  enum class Kind { SetThresholds, Start, Pause, Reset };
  Kind kind = Kind::Start;
  double t_idle = 0.0;
  double t_walk = 0.0;
};

std::string_view to_string(OperatorAction::Kind k);

/// Accepts threshold_update ({t_idle, t_walk}) and control ({action}).
/// Returns nullopt for any other message type; throws FormatError when a
/// recognized type has a malformed payload.
std::optional<OperatorAction> parse_action(const TelemetryMessage& msg);

class TelemetrySink {
 public:
  virtual ~TelemetrySink() = default;
  virtual void publish(const TelemetryMessage& msg) = 0;
};

class ActionSource {
 public:
  virtual ~ActionSource() = default;
  /// Actions received since the previous call, in arrival order.
  virtual std::vector<OperatorAction> poll_actions() = 0;
};

/// Lossless, synchronous: every message is written and flushed before
/// publish() returns.
class StreamSink final : public TelemetrySink {
 public:
  explicit StreamSink(std::ostream& out) : out_(&out) {}
  void publish(const TelemetryMessage& msg) override;

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

/// Collects messages in memory (tests, replay).
class MemorySink final : public TelemetrySink {
 public:
  void publish(const TelemetryMessage& msg) override;
  std::vector<TelemetryMessage> messages() const;

 private:
  mutable std::mutex mutex_;
  std::vector<TelemetryMessage> messages_;
};

/// Forwards to several sinks in order.
class FanOut final : public TelemetrySink {
 public:
  void add(TelemetrySink* sink) {
    if (sink) sinks_.push_back(sink);
  }
  void publish(const TelemetryMessage& msg) override {
    for (auto* s : sinks_) s->publish(msg);
  }
  bool empty() const { return sinks_.empty(); }

 private:
  std::vector<TelemetrySink*> sinks_;
};

/// Reads a newline-delimited log; blank lines are skipped.
std::vector<TelemetryMessage> read_telemetry_log(std::istream& in);

}  // namespace bciwalk

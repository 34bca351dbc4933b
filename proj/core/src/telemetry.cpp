#include "bciwalk/telemetry.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "bciwalk/error.hpp"

namespace bciwalk {

std::string TelemetryMessage::to_line() const {
  nlohmann::ordered_json j;
  j["type"] = type;
  j["session_time_s"] = session_time_s;
  j["payload"] = payload;
  return j.dump();
}

TelemetryMessage TelemetryMessage::parse(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("telemetry line is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw FormatError("telemetry message needs a string 'type'");
  TelemetryMessage m;
  m.type = j["type"].get<std::string>();
  if (j.contains("session_time_s")) {
    if (!j["session_time_s"].is_number()) throw FormatError("'session_time_s' must be a number");
    m.session_time_s = j["session_time_s"].get<double>();
  }
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw FormatError("'payload' must be an object");
    m.payload = j["payload"];
  }
  return m;
}

namespace telemetry {

namespace {

TelemetryMessage make(std::string type, double t, nlohmann::json payload) {
  return {std::move(type), t, std::move(payload)};
}

nlohmann::json histogram_json(const Histogram& h, const std::array<double, 3>& quartiles, std::size_t n) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"quartiles", quartiles}, {"n", n}};
}

}  // namespace

TelemetryMessage session_start(double t, std::string_view mode, const Track& track, const FsmConfig& fsm,
                               const ScoringConfig& scoring) {
  return make("session_start", t,
              {{"schema_version", kTelemetrySchemaVersion},
               {"mode", std::string(mode)},
               {"track", track},
               {"fsm", fsm},
               {"scoring", scoring}});
}

TelemetryMessage posterior(double t, std::size_t tick, double p_walk, double smoothed,
                           std::optional<BrainState> intent) {
  nlohmann::json p = {{"tick", tick}, {"p_walk", p_walk}, {"smoothed", smoothed}};
  p["intent"] = intent ? nlohmann::json(std::string(to_string(*intent))) : nlohmann::json(nullptr);
  return make("posterior", t, std::move(p));
}

TelemetryMessage state(double t, BrainState previous, BrainState current) {
  return make("state", t,
              {{"state", std::string(to_string(current))},
               {"previous", std::string(to_string(previous))},
               {"changed", previous != current}});
}

TelemetryMessage calibration_histogram(double t, const CalibrationReport& report, bool final_report) {
  return make("calibration_histogram", t,
              {{"idle", histogram_json(report.idle_histogram, report.idle_quartiles, report.idle_posteriors.size())},
               {"walk", histogram_json(report.walk_histogram, report.walk_quartiles, report.walk_posteriors.size())},
               {"suggested_t_idle", report.suggested_t_idle},
               {"suggested_t_walk", report.suggested_t_walk},
               {"separable", report.separable},
               {"final", final_report}});
}

TelemetryMessage avatar_position(double t, double position_m, BrainState state) {
  return make("avatar_position", t, {{"position_m", position_m}, {"state", std::string(to_string(state))}});
}

TelemetryMessage npc_status(double t, std::size_t npc, double credit, double dwell_s, bool inside) {
  return make("npc_status", t, {{"npc", npc}, {"credit", credit}, {"dwell_s", dwell_s}, {"inside", inside}});
}

TelemetryMessage score(double t, double stops_score, std::size_t npcs_credited) {
  return make("score", t, {{"stops_score", stops_score}, {"npcs_credited", npcs_credited}});
}

TelemetryMessage session_end(double t, const SessionResult& result) {
  return make("session_end", t, {{"result", result}});
}

TelemetryMessage threshold_update(double t, double t_idle, double t_walk, bool accepted,
                                  std::string_view source, std::string_view reason) {
  nlohmann::json p = {{"t_idle", t_idle}, {"t_walk", t_walk}, {"accepted", accepted}, {"source", std::string(source)}};
  if (!reason.empty()) p["reason"] = std::string(reason);
  return make("threshold_update", t, std::move(p));
}

TelemetryMessage control(double t, std::string_view action, bool accepted, std::string_view reason) {
  nlohmann::json p = {{"action", std::string(action)}, {"accepted", accepted}};
  if (!reason.empty()) p["reason"] = std::string(reason);
  return make("control", t, std::move(p));
}

}  // namespace telemetry

std::string_view to_string(OperatorAction::Kind k) {
  switch (k) {
    case OperatorAction::Kind::SetThresholds: return "set_thresholds";
    case OperatorAction::Kind::Start: return "start";
    case OperatorAction::Kind::Pause: return "pause";
    case OperatorAction::Kind::Reset: return "reset";
  }
  return "start";
}

std::optional<OperatorAction> parse_action(const TelemetryMessage& msg) {
  const auto& p = msg.payload;
  if (msg.type == "threshold_update") {
    if (!p.contains("t_idle") || !p.contains("t_walk") || !p["t_idle"].is_number() || !p["t_walk"].is_number())
      throw FormatError("threshold_update needs numeric t_idle and t_walk");
    OperatorAction a;
    a.kind = OperatorAction::Kind::SetThresholds;
    a.t_idle = p["t_idle"].get<double>();
    a.t_walk = p["t_walk"].get<double>();
    return a;
  }
  if (msg.type == "control") {
    if (!p.contains("action") || !p["action"].is_string()) throw FormatError("control needs a string action");
    const auto action = p["action"].get<std::string>();
    for (auto k : {OperatorAction::Kind::Start, OperatorAction::Kind::Pause, OperatorAction::Kind::Reset})
      if (action == to_string(k)) return OperatorAction{k, 0.0, 0.0};
    throw FormatError("unknown control action '" + action + "'");
  }
  return std::nullopt;
}

void StreamSink::publish(const TelemetryMessage& msg) {
  const std::string line = msg.to_line();
  std::lock_guard lock(mutex_);
  *out_ << line << '\n';
  out_->flush();
  if (!*out_) throw std::runtime_error("session log write failed");
}

void MemorySink::publish(const TelemetryMessage& msg) {
  std::lock_guard lock(mutex_);
  messages_.push_back(msg);
}

std::vector<TelemetryMessage> MemorySink::messages() const {
  std::lock_guard lock(mutex_);
  return messages_;
}

std::vector<TelemetryMessage> read_telemetry_log(std::istream& in) {
  std::vector<TelemetryMessage> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(TelemetryMessage::parse(line));
    } catch (const FormatError& e) {
      throw FormatError("log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace bciwalk

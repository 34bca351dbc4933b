#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string_view>
#include <vector>

#include "bciwalk/online.hpp"
#include "bciwalk/types.hpp"

namespace bciwalk {

/// One-dimensional walking course with stop zones around each NPC.
struct Track {
  std::vector<double> npc_positions;
  double body_length_m = 1.0;
  double dwell_radius_m = 2.0;
  double avatar_speed_mps = 1.0;
  double start_position_m = 0.0;

  /// Ten NPCs 18.152 m apart, the first one zone radius past 18.152 m, so
  /// that walking to the last zone plus ten 2-s dwells takes 201.52 s.
  static Track make_default();

  std::size_t n_npcs() const { return npc_positions.size(); }
  double zone_lo(std::size_t k) const { return npc_positions[k] - dwell_radius_m; }
  double zone_hi(std::size_t k) const { return npc_positions[k] + dwell_radius_m; }
  /// Zone containing x (closed intervals), if any.
  std::optional<std::size_t> zone_at(double x) const;
  /// Walk time to the near edge of the last zone plus the required dwells.
  double min_completion_time_s(double full_dwell_s = 2.0) const;

  void validate() const;
  friend bool operator==(const Track&, const Track&) = default;
};

enum class PartialCredit : std::uint8_t { Linear, Flat };

struct ScoringConfig {
  double full_dwell_s = 2.0;
  double min_dwell_s = 0.5;
  PartialCredit partial = PartialCredit::Linear;
  double time_limit_s = 1200.0;
  double tick_s = 0.5;

  void validate() const;
  friend bool operator==(const ScoringConfig&, const ScoringConfig&) = default;
};

std::string_view to_string(PartialCredit p);
PartialCredit parse_partial_credit(std::string_view s);

/// 1 for dwell >= full_dwell_s; dwell / full_dwell_s (linear) or 0.5 (flat)
/// for min_dwell_s <= dwell < full_dwell_s; otherwise 0.
double credit_stop(double dwell_s, const ScoringConfig& cfg = {});

struct DwellRecord {
  std::size_t npc = 0;
  double entry_s = 0.0;
  double exit_s = 0.0;
  double credit = 0.0;

  friend bool operator==(const DwellRecord&, const DwellRecord&) = default;
};

enum class EventKind : std::uint8_t { Transition, FalsePositive, FalseNegative };
std::string_view to_string(EventKind k);

/// A state transition (start_s == end_s, `state` is the new state) or an
/// interval in which the avatar disagreed with the intent: a false positive
/// is walking while idling was intended, a false negative the reverse.
struct SessionEvent {
  EventKind kind = EventKind::Transition;
  double start_s = 0.0;
  double end_s = 0.0;
  BrainState state = BrainState::Idle;

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

struct SessionResult {
  double stops_score = 0.0;
  double completion_time_s = 0.0;
  bool finished = false;
  std::vector<double> npc_credits;
  std::vector<DwellRecord> dwells;
  std::vector<SessionEvent> events;
  std::size_t ticks = 0;
  double final_position_m = 0.0;

  friend bool operator==(const SessionResult&, const SessionResult&) = default;
};

void to_json(nlohmann::json& j, const SessionResult& r);
void from_json(const nlohmann::json& j, SessionResult& r);
void to_json(nlohmann::json& j, const Track& t);
void from_json(const nlohmann::json& j, Track& t);
void to_json(nlohmann::json& j, const ScoringConfig& s);
void from_json(const nlohmann::json& j, ScoringConfig& s);
void to_json(nlohmann::json& j, const FsmConfig& c);
void from_json(const nlohmann::json& j, FsmConfig& c);

void save_session_result(const SessionResult& r, const std::filesystem::path& path);
SessionResult load_session_result(const std::filesystem::path& path);

/// Avatar kinematics and dwell scoring on a track, in fixed ticks.
class CourseSim {
 public:
  explicit CourseSim(Track track = Track::make_default(), ScoringConfig scoring = {});

  /// Advances one tick: moves when walking, then, standing inside a zone,
  /// accumulates dwell and updates that NPC's credit (max over visits).
  void step(BrainState state);

  const Track& track() const { return track_; }
  const ScoringConfig& scoring() const { return scoring_; }
  double position_m() const { return position_; }
  double time_s() const { return static_cast<double>(ticks_) * scoring_.tick_s; }
  std::size_t ticks() const { return ticks_; }
  const std::vector<double>& credits() const { return credits_; }
  double score() const;
  /// Last NPC fully credited or its zone passed.
  bool course_complete() const;
  bool timed_out() const;
  bool over() const { return course_complete() || timed_out(); }
  /// Closed and open dwell intervals so far.
  std::vector<DwellRecord> dwells() const;

 private:
  void close_visit();

  Track track_;
  ScoringConfig scoring_;
  double position_;
  std::size_t ticks_ = 0;
  std::vector<double> credits_;
  std::vector<DwellRecord> closed_;
  std::optional<DwellRecord> open_;
};

/// Functional form of CourseSim::step.
CourseSim sim_step(CourseSim sim, BrainState state);

/// Everything after decoding: smoothing, state machine, course and event
/// log. Live sessions, replays and Monte Carlo runs all drive this class,
/// one posterior per tick.
class SessionRunner {
 public:
  SessionRunner(Track track, FsmConfig fsm, ScoringConfig scoring = {});

  struct Tick {
    double time_s = 0.0;  // session time at the end of the tick
    double posterior = 0.0;
    double smoothed = 0.0;
    BrainState previous = BrainState::Idle;
    BrainState state = BrainState::Idle;
    std::optional<BrainState> intent;
  };

  Tick tick(double posterior, std::optional<BrainState> intent = std::nullopt);
  /// Takes effect from the next tick. Throws InvalidInput on bad ordering.
  void set_thresholds(double t_idle, double t_walk);
  /// Back to the start of the course with an empty history.
  void reset();

  bool done() const { return sim_.over(); }
  const FsmConfig& fsm_config() const { return fsm_cfg_; }
  const FsmState& fsm_state() const { return fsm_; }
  const CourseSim& sim() const { return sim_; }
  SessionResult result() const;

 private:
  void close_mismatch();

  Track track_;
  FsmConfig fsm_cfg_;
  ScoringConfig scoring_;
  FsmState fsm_;
  CourseSim sim_;
  std::vector<SessionEvent> events_;
  std::optional<SessionEvent> mismatch_;
};

}  // namespace bciwalk

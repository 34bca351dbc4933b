#include "bciwalk/vre.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "bciwalk/error.hpp"

namespace bciwalk {

Track Track::make_default() {
  Track t;
  constexpr double spacing = 18.152;
  for (int k = 1; k <= 10; ++k) t.npc_positions.push_back(k * spacing + t.dwell_radius_m);
  return t;
}

std::optional<std::size_t> Track::zone_at(double x) const {
  for (std::size_t k = 0; k < npc_positions.size(); ++k)
    if (x >= zone_lo(k) && x <= zone_hi(k)) return k;
  return std::nullopt;
}

double Track::min_completion_time_s(double full_dwell_s) const {
  return (zone_lo(n_npcs() - 1) - start_position_m) / avatar_speed_mps +
         static_cast<double>(n_npcs()) * full_dwell_s;
}

void Track::validate() const {
  if (npc_positions.size() != 10)
    throw InvalidInput("track needs exactly 10 NPCs, got " + std::to_string(npc_positions.size()));
  if (!(body_length_m > 0.0) || !(dwell_radius_m > 0.0) || !(avatar_speed_mps > 0.0))
    throw InvalidInput("track body length, dwell radius and speed must be positive");
  for (std::size_t k = 1; k < npc_positions.size(); ++k)
    if (!(npc_positions[k] - npc_positions[k - 1] > 2.0 * dwell_radius_m))
      throw InvalidInput("NPC zones must be disjoint and in increasing order");
  if (!(zone_lo(0) > start_position_m)) throw InvalidInput("the first NPC zone must lie ahead of the start");
}

void ScoringConfig::validate() const {
  if (!(tick_s > 0.0) || !(time_limit_s > 0.0)) throw InvalidInput("tick and time limit must be positive");
  if (!(min_dwell_s >= 0.0) || !(full_dwell_s > min_dwell_s))
    throw InvalidInput("dwell thresholds need 0 <= min_dwell < full_dwell");
}

std::string_view to_string(PartialCredit p) { return p == PartialCredit::Linear ? "linear" : "flat"; }

PartialCredit parse_partial_credit(std::string_view s) {
  if (s == "linear") return PartialCredit::Linear;
  if (s == "flat") return PartialCredit::Flat;
  throw FormatError("unknown partial credit rule '" + std::string(s) + "'");
}

double credit_stop(double dwell_s, const ScoringConfig& cfg) {
  if (dwell_s >= cfg.full_dwell_s) return 1.0;
  if (dwell_s >= cfg.min_dwell_s)
    return cfg.partial == PartialCredit::Linear ? dwell_s / cfg.full_dwell_s : 0.5;
  return 0.0;
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Transition: return "transition";
    case EventKind::FalsePositive: return "false_positive";
    case EventKind::FalseNegative: return "false_negative";
  }
  return "transition";
}

namespace {

EventKind parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::Transition, EventKind::FalsePositive, EventKind::FalseNegative})
    if (to_string(k) == s) return k;
  throw FormatError("unknown event kind '" + std::string(s) + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const Track& t) {
  j = {{"npc_positions", t.npc_positions},   {"body_length_m", t.body_length_m},
       {"dwell_radius_m", t.dwell_radius_m}, {"avatar_speed_mps", t.avatar_speed_mps},
       {"start_position_m", t.start_position_m}};
}

void from_json(const nlohmann::json& j, Track& t) {
  Track d = Track::make_default();
  t.npc_positions = j.value("npc_positions", d.npc_positions);
  t.body_length_m = j.value("body_length_m", d.body_length_m);
  t.dwell_radius_m = j.value("dwell_radius_m", d.dwell_radius_m);
  t.avatar_speed_mps = j.value("avatar_speed_mps", d.avatar_speed_mps);
  t.start_position_m = j.value("start_position_m", d.start_position_m);
}

void to_json(nlohmann::json& j, const ScoringConfig& s) {
  j = {{"full_dwell_s", s.full_dwell_s},
       {"min_dwell_s", s.min_dwell_s},
       {"partial_credit", std::string(to_string(s.partial))},
       {"time_limit_s", s.time_limit_s},
       {"tick_s", s.tick_s}};
}

void from_json(const nlohmann::json& j, ScoringConfig& s) {
  ScoringConfig d;
  s.full_dwell_s = j.value("full_dwell_s", d.full_dwell_s);
  s.min_dwell_s = j.value("min_dwell_s", d.min_dwell_s);
  s.partial = parse_partial_credit(j.value("partial_credit", std::string(to_string(d.partial))));
  s.time_limit_s = j.value("time_limit_s", d.time_limit_s);
  s.tick_s = j.value("tick_s", d.tick_s);
}

void to_json(nlohmann::json& j, const FsmConfig& c) {
  j = {{"t_idle", c.t_idle},
       {"t_walk", c.t_walk},
       {"smoothing_window_s", c.smoothing_window_s},
       {"segment_len_s", c.segment_len_s}};
}

void from_json(const nlohmann::json& j, FsmConfig& c) {
  FsmConfig d;
  c.t_idle = j.value("t_idle", d.t_idle);
  c.t_walk = j.value("t_walk", d.t_walk);
  c.smoothing_window_s = j.value("smoothing_window_s", d.smoothing_window_s);
  c.segment_len_s = j.value("segment_len_s", d.segment_len_s);
}

void to_json(nlohmann::json& j, const SessionResult& r) {
  nlohmann::json dwells = nlohmann::json::array();
  for (const auto& d : r.dwells)
    dwells.push_back({{"npc", d.npc}, {"entry_s", d.entry_s}, {"exit_s", d.exit_s}, {"credit", d.credit}});
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events)
    events.push_back({{"kind", std::string(to_string(e.kind))},
                      {"start_s", e.start_s},
                      {"end_s", e.end_s},
                      {"state", std::string(to_string(e.state))}});
  j = {{"stops_score", r.stops_score},
       {"completion_time_s", r.completion_time_s},
       {"finished", r.finished},
       {"npc_credits", r.npc_credits},
       {"ticks", r.ticks},
       {"final_position_m", r.final_position_m},
       {"dwells", dwells},
       {"events", events}};
}

void from_json(const nlohmann::json& j, SessionResult& r) {
  r.stops_score = j.at("stops_score").get<double>();
  r.completion_time_s = j.at("completion_time_s").get<double>();
  r.finished = j.at("finished").get<bool>();
  r.npc_credits = j.at("npc_credits").get<std::vector<double>>();
  r.ticks = j.value("ticks", std::size_t{0});
  r.final_position_m = j.value("final_position_m", 0.0);
  r.dwells.clear();
  for (const auto& d : j.value("dwells", nlohmann::json::array()))
    r.dwells.push_back({d.at("npc").get<std::size_t>(), d.at("entry_s").get<double>(),
                        d.at("exit_s").get<double>(), d.at("credit").get<double>()});
  r.events.clear();
  for (const auto& e : j.value("events", nlohmann::json::array()))
    r.events.push_back({parse_event_kind(e.at("kind").get<std::string>()), e.at("start_s").get<double>(),
                        e.at("end_s").get<double>(), parse_brain_state(e.at("state").get<std::string>())});
}

void save_session_result(const SessionResult& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << nlohmann::json(r).dump(2) << '\n';
}

SessionResult load_session_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open session result '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in).get<SessionResult>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("session result '" + path.string() + "': " + e.what());
  }
}

CourseSim::CourseSim(Track track, ScoringConfig scoring)
    : track_(std::move(track)), scoring_(scoring), position_(track_.start_position_m) {
  track_.validate();
  scoring_.validate();
  credits_.assign(track_.n_npcs(), 0.0);
}

void CourseSim::close_visit() {
  if (open_) closed_.push_back(*open_);
  open_.reset();
}

void CourseSim::step(BrainState state) {
  ++ticks_;
  const double now = time_s();
  if (state == BrainState::Walk) {
    close_visit();
    position_ += track_.avatar_speed_mps * scoring_.tick_s;
    return;
  }
  const auto zone = track_.zone_at(position_);
  if (!zone) {
    close_visit();
    return;
  }
  if (!open_ || open_->npc != *zone) {
    close_visit();
    open_ = DwellRecord{*zone, now - scoring_.tick_s, now, 0.0};
  }
  open_->exit_s = now;
  open_->credit = credit_stop(open_->exit_s - open_->entry_s, scoring_);
  credits_[*zone] = std::max(credits_[*zone], open_->credit);
}

double CourseSim::score() const { return std::accumulate(credits_.begin(), credits_.end(), 0.0); }

bool CourseSim::course_complete() const {
  return credits_.back() >= 1.0 || position_ > track_.zone_hi(track_.n_npcs() - 1);
}

bool CourseSim::timed_out() const {
  return !course_complete() && time_s() >= scoring_.time_limit_s - 1e-9;
}

std::vector<DwellRecord> CourseSim::dwells() const {
  auto out = closed_;
  if (open_) out.push_back(*open_);
  return out;
}

CourseSim sim_step(CourseSim sim, BrainState state) {
  sim.step(state);
  return sim;
}

SessionRunner::SessionRunner(Track track, FsmConfig fsm, ScoringConfig scoring)
    : track_(std::move(track)),
      fsm_cfg_(fsm),
      scoring_(scoring),
      fsm_(make_fsm_state(fsm)),
      sim_(track_, scoring_) {
  fsm_cfg_.validate_ordering();
  if (std::abs(fsm_cfg_.segment_len_s - scoring_.tick_s) > 1e-12)
    throw InvalidInput("state machine segment length must equal the simulator tick");
}

void SessionRunner::close_mismatch() {
  if (mismatch_) events_.push_back(*mismatch_);
  mismatch_.reset();
}

SessionRunner::Tick SessionRunner::tick(double posterior, std::optional<BrainState> intent) {
  if (done()) throw InvalidInput("session is over; no further ticks");
  Tick t;
  t.posterior = posterior;
  t.previous = fsm_.state;
  t.intent = intent;
  t.smoothed = fsm_observe(fsm_, posterior, fsm_cfg_);
  t.state = fsm_.state;
  sim_.step(t.state);
  t.time_s = sim_.time_s();
  if (t.state != t.previous) events_.push_back({EventKind::Transition, t.time_s, t.time_s, t.state});

  std::optional<EventKind> kind;
  if (intent && *intent != t.state)
    kind = t.state == BrainState::Walk ? EventKind::FalsePositive : EventKind::FalseNegative;
  if (kind && mismatch_ && mismatch_->kind == *kind) {
    mismatch_->end_s = t.time_s;
  } else {
    close_mismatch();
    if (kind) mismatch_ = SessionEvent{*kind, t.time_s - scoring_.tick_s, t.time_s, t.state};
  }
  if (done()) close_mismatch();
  return t;
}

void SessionRunner::set_thresholds(double t_idle, double t_walk) {
  FsmConfig next = fsm_cfg_;
  next.t_idle = t_idle;
  next.t_walk = t_walk;
  next.validate_ordering();
  fsm_cfg_ = next;
}

void SessionRunner::reset() {
  fsm_ = make_fsm_state(fsm_cfg_);
  sim_ = CourseSim(track_, scoring_);
  events_.clear();
  mismatch_.reset();
}

SessionResult SessionRunner::result() const {
  SessionResult r;
  r.stops_score = sim_.score();
  r.finished = sim_.course_complete();
  r.completion_time_s = r.finished ? sim_.time_s() : std::max(sim_.time_s(), 0.0);
  if (sim_.timed_out()) r.completion_time_s = scoring_.time_limit_s;
  r.npc_credits = sim_.credits();
  r.dwells = sim_.dwells();
  r.events = events_;
  if (mismatch_) r.events.push_back(*mismatch_);
  r.ticks = sim_.ticks();
  r.final_position_m = sim_.position_m();
  return r;
}

}  // namespace bciwalk

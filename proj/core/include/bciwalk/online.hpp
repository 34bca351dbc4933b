#pragma once

#include <Eigen/Dense>
#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "bciwalk/decoder.hpp"
#include "bciwalk/signal.hpp"
#include "bciwalk/types.hpp"

namespace bciwalk {

/// Hysteresis thresholds and timing of the walk/idle state machine.
struct FsmConfig {
  double t_idle = 0.40;  // stop when the smoothed posterior drops below
  double t_walk = 0.62;  // start when it rises above
  double smoothing_window_s = 1.5;
  double segment_len_s = 0.5;

  /// Number of posteriors averaged by the smoother.
  std::size_t history_len() const;
  /// Operator range: 0 <= t_idle <= t_walk <= 1, positive timing.
  void validate() const;
  /// Like validate() but accepts thresholds outside [0, 1] (an unreachable
  /// threshold is how a simulation pins the machine in one state).
  void validate_ordering() const;

  friend bool operator==(const FsmConfig&, const FsmConfig&) = default;
};

/// Ring of the most recent posteriors.
class PosteriorWindow {
 public:
  explicit PosteriorWindow(std::size_t capacity = 3);

  void push(double p);
  void clear();
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return values_.size(); }
  bool empty() const { return size_ == 0; }
  /// Oldest first.
  std::vector<double> values() const;
  /// Mean of the stored posteriors. Requires at least one.
  double mean() const;

 private:
  std::vector<double> values_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

/// Arithmetic mean of 1 to 3 posteriors.
double smooth(std::span<const double> history);

/// Idle -> Walk iff p > t_walk; Walk -> Idle iff p < t_idle; else hold.
BrainState fsm_transition(BrainState current, double smoothed, const FsmConfig& cfg);

struct FsmState {
  BrainState state = BrainState::Idle;
  PosteriorWindow history{3};
  double clock_s = 0.0;
};

FsmState make_fsm_state(const FsmConfig& cfg);

/// Transition on an already smoothed posterior; advances the clock by one
/// segment. The history is left untouched.
FsmState fsm_step(const FsmState& state, double smoothed, const FsmConfig& cfg);

/// Pushes a raw posterior, smooths and steps. Returns the smoothed value.
double fsm_observe(FsmState& state, double posterior, const FsmConfig& cfg);

/// Per-segment decoding with the model's preprocessing frozen in.
///
/// A segment is [C_raw x n] with the raw montage the model was trained on.
/// The path is CAR over all raw channels, zero-phase band-pass, channel
/// mask, periodogram over the model band, feature extraction and posterior.
class OnlineDecoder {
 public:
  explicit OnlineDecoder(const DecodingModel& model);

  const DecodingModel& model() const { return model_; }
  Eigen::Index segment_samples() const { return segment_samples_; }

  FeatureValue decode(const Eigen::Ref<const Eigen::MatrixXd>& segment) const;
  double process_segment(const Eigen::Ref<const Eigen::MatrixXd>& segment) const {
    return decode(segment).p_walk;
  }

 private:
  DecodingModel model_;
  BandpassFilter filter_;
  Eigen::Index segment_samples_;
};

/// One-shot convenience; builds the decoder each call.
double process_segment(const Eigen::Ref<const Eigen::MatrixXd>& segment, const DecodingModel& model,
                       double segment_len_s = 0.5);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

/// Fixed-layout histogram; values outside [lo, hi] are clamped into the end
/// bins and hi itself falls in the last bin.
Histogram make_histogram(std::span<const double> values, std::size_t n_bins = 20, double lo = 0.0,
                         double hi = 1.0);

/// Linear-interpolation quantile (the common "type 7" definition).
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);

struct CalibrationReport {
  std::vector<double> idle_posteriors;
  std::vector<double> walk_posteriors;
  Histogram idle_histogram;
  Histogram walk_histogram;
  std::array<double, 3> idle_quartiles{};  // 25, 50, 75 %
  std::array<double, 3> walk_quartiles{};
  double suggested_t_idle = 0.0;  // median of idle posteriors
  double suggested_t_walk = 1.0;  // median of walk posteriors
  bool separable = false;         // median(idle) < median(walk)

  /// Thresholds to persist: the medians, ordered so t_idle <= t_walk even
  /// when the report is not separable.
  FsmConfig thresholds(FsmConfig base = {}) const;
};

/// Builds the report from raw posteriors and the condition the operator
/// was prompted for at each one. Throws InvalidInput unless both
/// conditions are present.
CalibrationReport calibrate(std::span<const double> posteriors, std::span<const BrainState> conditions);

/// Thresholds file: small JSON document {format_version, t_idle, t_walk,
/// smoothing_window_s, segment_len_s}.
void save_thresholds(const FsmConfig& cfg, const std::filesystem::path& path);
FsmConfig load_thresholds(const std::filesystem::path& path);

/// Tick source for the online loop. Session time starts at 0.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_s() const = 0;
  /// Blocks until session time t (no-op when already past).
  virtual void wait_until(double t_s) = 0;
};

/// Jumps straight to each requested time.
class SimulatedClock final : public Clock {
 public:
  double now_s() const override { return now_; }
  void wait_until(double t_s) override {
    if (t_s > now_) now_ = t_s;
  }

 private:
  double now_ = 0.0;
};

/// Wall-clock pacing from the moment of construction.
class RealTimeClock final : public Clock {
 public:
  RealTimeClock();
  double now_s() const override;
  void wait_until(double t_s) override;

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace bciwalk

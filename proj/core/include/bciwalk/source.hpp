#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "bciwalk/recording.hpp"
#include "bciwalk/types.hpp"
#include "bciwalk/vre.hpp"

namespace bciwalk {

/// What a closed-loop source may look at when producing the next segment.
struct SessionView {
  double time_s = 0.0;  // start time of the segment about to be produced
  double position_m = 0.0;
  BrainState fsm_state = BrainState::Idle;
  const Track* track = nullptr;
  const std::vector<double>* credits = nullptr;
};

/// One block of raw EEG plus, when the source knows it, the intended state.
struct Segment {
  Eigen::MatrixXd data;  // [C_raw x n]
  std::optional<BrainState> intent;
};

class SegmentSource {
 public:
  virtual ~SegmentSource() = default;
  /// Next segment. Throws SourceUnderrun when the source is exhausted.
  virtual Segment next(const SessionView& view) = 0;
  virtual const std::vector<std::string>& channel_names() const = 0;
  virtual double sample_rate_hz() const = 0;
};

/// Plays a recording back in consecutive segments; intent comes from the
/// recording's labels when present.
class RecordingSource final : public SegmentSource {
 public:
  explicit RecordingSource(EegRecording rec, double segment_len_s = 0.5);

  Segment next(const SessionView& view) override;
  const std::vector<std::string>& channel_names() const override { return rec_.channel_names; }
  double sample_rate_hz() const override { return rec_.sample_rate_hz; }
  std::size_t remaining() const;

 private:
  EegRecording rec_;
  Eigen::Index segment_samples_;
  Eigen::Index cursor_ = 0;
};

}  // namespace bciwalk

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bciwalk/types.hpp"

namespace bciwalk {

struct LabelTransition {
  double time_s = 0.0;
  BrainState state = BrainState::Idle;

  friend bool operator==(const LabelTransition&, const LabelTransition&) = default;
};

/// A contiguous span of recording time carrying one label.
struct LabelSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  BrainState state = BrainState::Idle;

  double duration_s() const { return end_s - start_s; }
};

/// Idle/walk labeling as a list of transitions. Each transition holds until
/// the next one (the last holds until the end of the recording).
///
/// Times are strictly increasing and non-negative; states strictly
/// alternate. A stream produced by the training protocol starts at 0; an
/// aligned stream may start later, leaving an unlabeled lead-in.
class LabelStream {
 public:
  LabelStream() = default;
  explicit LabelStream(std::vector<LabelTransition> transitions);

  const std::vector<LabelTransition>& transitions() const { return transitions_; }
  bool empty() const { return transitions_.empty(); }

  /// Label in force at time t, or nullopt before the first transition.
  std::optional<BrainState> state_at(double t) const;

  /// Labeled spans clipped to [0, duration_s).
  std::vector<LabelSegment> segments(double duration_s) const;

  /// Protocol labels: alternating epochs of `epoch_s` starting with `first`.
  static LabelStream alternating(double epoch_s, double total_s,
                                 BrainState first = BrainState::Idle);

  friend bool operator==(const LabelStream&, const LabelStream&) = default;

 private:
  std::vector<LabelTransition> transitions_;
};

/// Multichannel EEG. `samples` is [n_channels x n_samples] in microvolts.
struct EegRecording {
  double sample_rate_hz = 256.0;
  std::vector<std::string> channel_names;
  Eigen::MatrixXd samples;
  std::optional<LabelStream> labels;

  Eigen::Index n_channels() const { return samples.rows(); }
  Eigen::Index n_samples() const { return samples.cols(); }
  double duration_s() const { return static_cast<double>(n_samples()) / sample_rate_hz; }

  /// Throws InvalidInput when the invariants do not hold.
  void validate() const;

  std::optional<std::size_t> channel_index(const std::string& name) const;
};

/// The 63 extended 10-20 positions of the acquisition cap, in file order.
const std::vector<std::string>& default_channel_names();

// Recording container:
//
//   BCIWALK-RECORDING 1
//   sample_rate_hz <value>
//   n_channels <C>
//   n_samples <N>
//   channels <name> <name> ...
//   labels <K>
//   <time_s> <idle|walk>        (K lines)
//   data f32le
//   <C*N little-endian float32, channel-major>
//
// Numbers in the header use shortest round-trip formatting, so reading and
// re-writing a file reproduces it byte for byte. Samples are stored as
// float32; in-memory values are rounded on write.
void write_recording(const EegRecording& rec, std::ostream& out);
void write_recording(const EegRecording& rec, const std::filesystem::path& path);
EegRecording read_recording(std::istream& in);
EegRecording read_recording(const std::filesystem::path& path);

}  // namespace bciwalk

#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "bciwalk/recording.hpp"

namespace bciwalk {

/// Subtracts the instantaneous across-channel mean from every channel.
/// Requires at least two channels.
Eigen::MatrixXd common_average_reference(const Eigen::MatrixXd& samples);
EegRecording common_average_reference(const EegRecording& rec);

/// One biquad in transposed direct form II, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

struct BandpassConfig {
  double lo_hz = 0.01;
  double hi_hz = 40.0;
  /// Butterworth order of each edge; must be even.
  int order = 4;

  friend bool operator==(const BandpassConfig&, const BandpassConfig&) = default;
};

/// Butterworth band-pass realized as a high-pass cascade at lo_hz followed
/// by a low-pass cascade at hi_hz (bilinear transform, prewarped edges),
/// applied forward and backward for zero phase.
class BandpassFilter {
 public:
  BandpassFilter(double sample_rate_hz, const BandpassConfig& cfg = {});

  const std::vector<Biquad>& sections() const { return sections_; }

  /// Single-pass magnitude |H(f)|. The zero-phase output has |H(f)|^2.
  double magnitude(double freq_hz) const;

  /// Forward-backward filtering of one channel with odd-extension padding
  /// and steady-state initial conditions.
  Eigen::VectorXd filtfilt(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Causal single pass from rest.
  Eigen::VectorXd filter(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// filtfilt on every row.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& samples) const;

  std::size_t padding() const { return 3 * (2 * sections_.size() + 1); }

 private:
  double sample_rate_hz_;
  std::vector<Biquad> sections_;
};

EegRecording bandpass(const EegRecording& rec, double lo_hz = 0.01, double hi_hz = 40.0,
                      int order = 4);

struct ChannelExclusion {
  std::size_t index = 0;
  std::string reason;

  friend bool operator==(const ChannelExclusion&, const ChannelExclusion&) = default;
};

/// Partition of the original channels into retained and excluded sets.
struct ChannelMask {
  std::vector<std::size_t> retained;
  std::vector<ChannelExclusion> excluded;

  std::size_t total() const { return retained.size() + excluded.size(); }
  static ChannelMask all(std::size_t n_channels);

  friend bool operator==(const ChannelMask&, const ChannelMask&) = default;
};

struct ArtifactRejectionConfig {
  /// EMG proxy band.
  double band_lo_hz = 30.0;
  double band_hi_hz = 40.0;
  /// Exclusion threshold: median + k * MAD of the retained channels.
  double k = 5.0;
  /// Band power is averaged over consecutive windows of this length.
  double window_s = 4.0;
  /// MAD floor relative to the median, so numerically identical channels
  /// never trip the threshold.
  double relative_mad_floor = 1e-6;
};

/// Mean 30-40 Hz (configurable) power of each channel.
Eigen::VectorXd emg_band_power(const EegRecording& rec, const ArtifactRejectionConfig& cfg = {});

/// Iterative robust-outlier rejection on EMG band power. Each pass computes
/// the median and scaled MAD (1.4826 * MAD) over the channels still
/// retained and drops every channel above median + k * MAD; passes repeat
/// until nothing is dropped. Throws DegenerateInput if nothing survives.
std::pair<EegRecording, ChannelMask> reject_artifact_channels(
    const EegRecording& rec, const ArtifactRejectionConfig& cfg = {});

/// Keeps only `mask.retained` rows (and names).
EegRecording select_channels(const EegRecording& rec, const ChannelMask& mask);

/// Shifts label times by offset_s and attaches them to the recording.
/// Transitions before 0 collapse onto 0 (the state in force at 0 is kept);
/// transitions at or after the end are dropped. Throws InvalidInput if no
/// shifted transition falls inside [0, duration).
EegRecording align_labels(const EegRecording& rec, const LabelStream& labels, double offset_s);

}  // namespace bciwalk

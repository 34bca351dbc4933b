#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "bciwalk/recording.hpp"
#include "bciwalk/rng.hpp"
#include "bciwalk/signal.hpp"
#include "bciwalk/source.hpp"

namespace bciwalk {

struct ArtifactChannel {
  std::string name;
  /// Factor applied to the channel's 30-40 Hz power.
  double multiplier = 10.0;

  friend bool operator==(const ArtifactChannel&, const ArtifactChannel&) = default;
};

/// Synthetic subject: pink background on every channel plus a 10/14 Hz
/// rhythm on a few central channels that is attenuated while walking.
struct SynthSpec {
  std::vector<std::string> channel_names = default_channel_names();
  double sample_rate_hz = 256.0;
  std::vector<std::string> rhythm_channels{"FCz", "Cz", "CPz", "FC1", "FC2", "C1", "C2"};
  std::array<double, 2> rhythm_band_hz{8.0, 16.0};
  /// Fraction of rhythm power removed during Walk.
  double erd_depth = 0.8;
  /// RMS of the pink background, microvolts.
  double noise_floor = 10.0;
  /// Idle rhythm power over background power inside the rhythm band.
  double rhythm_snr = 0.7;
  /// Depth of the slow amplitude modulation of the rhythm.
  double am_depth = 0.3;
  double ramp_s = 0.5;
  std::vector<ArtifactChannel> artifact_channels;
  std::uint64_t seed = 1;

  std::size_t n_channels() const { return channel_names.size(); }
  void validate() const;
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
/// Missing keys keep their defaults; `n_channels` without names generates
/// Ch1..ChN.
void from_json(const nlohmann::json& j, SynthSpec& s);
SynthSpec load_synth_spec(const std::filesystem::path& path);

/// Sequential generator. Output depends only on the spec and on the
/// intended state at each sample, never on how the calls are chunked: every
/// channel owns its own random streams.
class SynthEngine {
 public:
  explicit SynthEngine(const SynthSpec& spec);

  const SynthSpec& spec() const { return spec_; }
  /// Next n samples, all with the given intended state. [C x n]
  Eigen::MatrixXd generate(Eigen::Index n, BrainState intent);
  Eigen::Index samples_emitted() const { return t_; }

  /// Rhythm amplitude of each sinusoid, microvolts.
  double rhythm_amplitude() const { return rhythm_amp_; }

 private:
  struct Channel {
    Rng noise;
    Rng artifact_noise;
    std::array<double, 3> pink_state{};
    std::vector<std::array<double, 2>> artifact_state;
    double artifact_scale = 0.0;  // 0 on clean channels
    bool rhythm = false;
    std::array<double, 2> phase{};
    double am_freq_hz = 0.0;
    double am_phase = 0.0;
  };

  SynthSpec spec_;
  std::vector<Channel> channels_;
  std::vector<Biquad> artifact_filter_;
  double pink_gain_ = 1.0;
  double rhythm_amp_ = 0.0;
  double gain_ = 1.0;  // current rhythm amplitude factor
  double ramp_from_ = 1.0;
  double ramp_to_ = 1.0;
  Eigen::Index ramp_pos_ = 0;
  Eigen::Index ramp_len_ = 0;
  Eigen::Index t_ = 0;
};

struct ProtocolSpec {
  double epoch_s = 30.0;
  double total_s = 600.0;
  BrainState first = BrainState::Idle;
};

/// Labeled recording following the alternating-epoch protocol.
EegRecording generate_recording(const SynthSpec& spec, const ProtocolSpec& protocol = {});

/// Decides the intended state for the segment starting at view.time_s.
class IntentPolicy {
 public:
  virtual ~IntentPolicy() = default;
  virtual BrainState intent(const SessionView& view) = 0;
};

/// Fixed timeline of intents. Intervals must be contiguous from 0;
/// asking past the end throws SourceUnderrun.
class TimedScript final : public IntentPolicy {
 public:
  struct Interval {
    double start_s;
    double end_s;
    BrainState state;
  };
  explicit TimedScript(std::vector<Interval> intervals);

  /// `pattern` of (duration, state) repeated until `total_s` is covered.
  static TimedScript repeat(const std::vector<std::pair<double, BrainState>>& pattern, double total_s);
  /// Alternating blocks, as used for calibration.
  static TimedScript alternating(double block_s, double total_s, BrainState first = BrainState::Idle);

  BrainState intent(const SessionView& view) override;
  BrainState at(double t_s) const;
  double end_s() const { return intervals_.empty() ? 0.0 : intervals_.back().end_s; }

 private:
  std::vector<Interval> intervals_;
};

/// Simulated operator: walks toward the next uncredited zone and idles
/// inside it until that NPC is fully credited. While still moving it starts
/// idling `lead_m` before the zone edge to absorb the decoding lag, and
/// walks on if the avatar stops short.
class ZoneSeekingPolicy final : public IntentPolicy {
 public:
  explicit ZoneSeekingPolicy(double lead_m = 0.5) : lead_m_(lead_m) {}
  BrainState intent(const SessionView& view) override;

 private:
  double lead_m_;
};

/// Live synthetic stream: each segment's class statistics follow the
/// policy's intent. Segment count is 2 per second of session time.
class SyntheticSource final : public SegmentSource {
 public:
  SyntheticSource(const SynthSpec& spec, std::shared_ptr<IntentPolicy> policy, double segment_len_s = 0.5);

  Segment next(const SessionView& view) override;
  const std::vector<std::string>& channel_names() const override { return engine_.spec().channel_names; }
  double sample_rate_hz() const override { return engine_.spec().sample_rate_hz; }
  std::size_t segments_emitted() const { return emitted_; }

 private:
  SynthEngine engine_;
  std::shared_ptr<IntentPolicy> policy_;
  Eigen::Index segment_samples_;
  std::size_t emitted_ = 0;
};

/// Convenience for open-loop scripts.
std::unique_ptr<SyntheticSource> stream_segments(const SynthSpec& spec, const TimedScript& script);

}  // namespace bciwalk

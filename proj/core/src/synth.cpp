#include "bciwalk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>

#include "bciwalk/error.hpp"

namespace bciwalk {

namespace {

// Three-pole 1/f approximation (Kellet), applied to white noise.
constexpr std::array<double, 4> kPinkB{0.049922035, -0.095993537, 0.050612699, -0.004408786};
constexpr std::array<double, 4> kPinkA{1.0, -2.494956002, 2.017265875, -0.522189400};

constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kArtifactStream = 2;
constexpr std::uint64_t kPhaseStream = 3;
constexpr Eigen::Index kBurnIn = 4096;

double pink_response_sq(double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  std::complex<double> num = 0.0, den = 0.0, zk = 1.0;
  for (std::size_t k = 0; k < 4; ++k) {
    num += kPinkB[k] * zk;
    den += kPinkA[k] * zk;
    zk *= z1;
  }
  return std::norm(num / den);
}

double cascade_response_sq(const std::vector<Biquad>& sections, double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  const std::complex<double> z2 = z1 * z1;
  double g = 1.0;
  for (const auto& s : sections)
    g *= std::norm((s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2));
  return g;
}

// Share of a unit-variance white input's output power falling in [lo, hi),
// relative to the white input variance: (2/fs) * integral of |H|^2.
template <class Response>
double band_power(Response&& h2, double lo, double hi, double fs) {
  constexpr int steps = 20000;
  const double df = (hi - lo) / steps;
  double sum = 0.0;
  for (int i = 0; i < steps; ++i) sum += h2(lo + (i + 0.5) * df);
  return 2.0 / fs * sum * df;
}

double pink_step(std::array<double, 3>& s, double x) {
  const double y = kPinkB[0] * x + s[0];
  s[0] = kPinkB[1] * x - kPinkA[1] * y + s[1];
  s[1] = kPinkB[2] * x - kPinkA[2] * y + s[2];
  s[2] = kPinkB[3] * x - kPinkA[3] * y;
  return y;
}

double cascade_step(const std::vector<Biquad>& sections, std::vector<std::array<double, 2>>& state, double x) {
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    auto& z = state[k];
    const double y = s.b0 * x + z[0];
    z[0] = s.b1 * x - s.a1 * y + z[1];
    z[1] = s.b2 * x - s.a2 * y;
    x = y;
  }
  return x;
}

std::vector<std::string> numbered_channels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back("Ch" + std::to_string(i));
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (channel_names.size() < 2) throw InvalidInput("synthetic montage needs at least 2 channels");
  std::set<std::string> names(channel_names.begin(), channel_names.end());
  if (names.size() != channel_names.size()) throw InvalidInput("synthetic channel names must be unique");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("sample rate must be positive");
  if (!(rhythm_band_hz[0] > 0.0) || !(rhythm_band_hz[0] < rhythm_band_hz[1]) ||
      !(rhythm_band_hz[1] < sample_rate_hz / 2.0))
    throw InvalidInput("rhythm band must satisfy 0 < lo < hi < fs/2");
  if (!(erd_depth >= 0.0 && erd_depth <= 1.0)) throw InvalidInput("erd_depth must lie in [0, 1]");
  if (!(noise_floor > 0.0)) throw InvalidInput("noise_floor must be positive");
  if (!(rhythm_snr >= 0.0)) throw InvalidInput("rhythm_snr must be non-negative");
  if (!(am_depth >= 0.0 && am_depth < 1.0)) throw InvalidInput("am_depth must lie in [0, 1)");
  if (!(ramp_s >= 0.0)) throw InvalidInput("ramp_s must be non-negative");
  for (const auto& r : rhythm_channels)
    if (!names.contains(r)) throw InvalidInput("rhythm channel '" + r + "' is not in the montage");
  for (const auto& a : artifact_channels) {
    if (!names.contains(a.name)) throw InvalidInput("artifact channel '" + a.name + "' is not in the montage");
    if (!(a.multiplier >= 1.0)) throw InvalidInput("artifact multiplier must be >= 1");
  }
  if (!artifact_channels.empty() && !(sample_rate_hz / 2.0 > 40.0))
    throw InvalidInput("artifact injection needs a sample rate above 80 Hz");
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : s.artifact_channels) artifacts.push_back({{"name", a.name}, {"multiplier", a.multiplier}});
  j = {{"format_version", 1},
       {"n_channels", s.n_channels()},
       {"channel_names", s.channel_names},
       {"sample_rate_hz", s.sample_rate_hz},
       {"rhythm_channels", s.rhythm_channels},
       {"rhythm_band_hz", s.rhythm_band_hz},
       {"erd_depth", s.erd_depth},
       {"noise_floor", s.noise_floor},
       {"rhythm_snr", s.rhythm_snr},
       {"am_depth", s.am_depth},
       {"ramp_s", s.ramp_s},
       {"artifact_channels", artifacts},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  SynthSpec d;
  if (j.contains("channel_names")) {
    s.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  } else if (j.contains("n_channels")) {
    const auto n = j.at("n_channels").get<std::size_t>();
    s.channel_names = n == d.channel_names.size() ? d.channel_names : numbered_channels(n);
  } else {
    s.channel_names = d.channel_names;
  }
  if (j.contains("n_channels") && j.at("n_channels").get<std::size_t>() != s.channel_names.size())
    throw InvalidInput("n_channels does not match channel_names");
  s.sample_rate_hz = j.value("sample_rate_hz", d.sample_rate_hz);
  s.rhythm_channels = j.value("rhythm_channels", d.rhythm_channels);
  s.rhythm_band_hz = j.value("rhythm_band_hz", d.rhythm_band_hz);
  s.erd_depth = j.value("erd_depth", d.erd_depth);
  s.noise_floor = j.value("noise_floor", d.noise_floor);
  s.rhythm_snr = j.value("rhythm_snr", d.rhythm_snr);
  s.am_depth = j.value("am_depth", d.am_depth);
  s.ramp_s = j.value("ramp_s", d.ramp_s);
  s.artifact_channels.clear();
  for (const auto& a : j.value("artifact_channels", nlohmann::json::array()))
    s.artifact_channels.push_back({a.at("name").get<std::string>(), a.value("multiplier", 10.0)});
  s.seed = j.value("seed", d.seed);
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synth spec '" + path.string() + "'");
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format_version", 1) != 1) throw FormatError("unsupported synth spec format version");
    s = j.get<SynthSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("synth spec '" + path.string() + "': " + e.what());
  }
  s.validate();
  return s;
}

SynthEngine::SynthEngine(const SynthSpec& spec) : spec_(spec) {
  spec_.validate();
  const double fs = spec_.sample_rate_hz;
  const double pink_total = band_power([&](double f) { return pink_response_sq(f, fs); }, 0.0, fs / 2.0, fs);
  pink_gain_ = spec_.noise_floor / std::sqrt(pink_total);
  const auto [lo, hi] = spec_.rhythm_band_hz;
  const double bg_rhythm = pink_gain_ * pink_gain_ *
                           band_power([&](double f) { return pink_response_sq(f, fs); }, lo, hi, fs);
  const double m = spec_.am_depth;
  rhythm_amp_ = std::sqrt(spec_.rhythm_snr * bg_rhythm / (1.0 + m * m / 2.0));

  double artifact_band = 0.0, bg_emg = 0.0;
  if (!spec_.artifact_channels.empty()) {
    artifact_filter_ = BandpassFilter(fs, {30.0, 40.0, 4}).sections();
    artifact_band = band_power([&](double f) { return cascade_response_sq(artifact_filter_, f, fs); }, 30.0, 40.0, fs);
    bg_emg = pink_gain_ * pink_gain_ * band_power([&](double f) { return pink_response_sq(f, fs); }, 30.0, 40.0, fs);
  }

  const Rng master(spec_.seed);
  for (std::size_t c = 0; c < spec_.n_channels(); ++c) {
    const Rng base = master.child(c);
    Channel ch{base.child(kNoiseStream), base.child(kArtifactStream), {}, {}};
    const auto& name = spec_.channel_names[c];
    ch.rhythm = std::find(spec_.rhythm_channels.begin(), spec_.rhythm_channels.end(), name) !=
                spec_.rhythm_channels.end();
    Rng phases = base.child(kPhaseStream);
    ch.phase = {phases.uniform(0.0, 2.0 * std::numbers::pi), phases.uniform(0.0, 2.0 * std::numbers::pi)};
    ch.am_freq_hz = phases.uniform(0.1, 0.4);
    ch.am_phase = phases.uniform(0.0, 2.0 * std::numbers::pi);
    for (const auto& a : spec_.artifact_channels)
      if (a.name == name && a.multiplier > 1.0)
        ch.artifact_scale = std::sqrt((a.multiplier - 1.0) * bg_emg / artifact_band);
    ch.artifact_state.assign(artifact_filter_.size(), {0.0, 0.0});
    for (Eigen::Index i = 0; i < kBurnIn; ++i) {
      pink_step(ch.pink_state, ch.noise.normal());
      if (ch.artifact_scale > 0.0) cascade_step(artifact_filter_, ch.artifact_state, ch.artifact_noise.normal());
    }
    channels_.push_back(std::move(ch));
  }
}

Eigen::MatrixXd SynthEngine::generate(Eigen::Index n, BrainState intent) {
  if (n < 0) throw InvalidInput("sample count must be non-negative");
  const double fs = spec_.sample_rate_hz;
  const double target = intent == BrainState::Walk ? std::sqrt(1.0 - spec_.erd_depth) : 1.0;
  if (t_ == 0) {
    gain_ = ramp_from_ = ramp_to_ = target;
    ramp_len_ = 0;
  } else if (target != ramp_to_) {
    ramp_from_ = gain_;
    ramp_to_ = target;
    ramp_pos_ = 0;
    ramp_len_ = static_cast<Eigen::Index>(std::llround(spec_.ramp_s * fs));
  }
  Eigen::VectorXd gain(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ramp_pos_ < ramp_len_) {
      ++ramp_pos_;
      const double u = static_cast<double>(ramp_pos_) / static_cast<double>(ramp_len_);
      gain_ = ramp_from_ + (ramp_to_ - ramp_from_) * 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    } else {
      gain_ = ramp_to_;
    }
    gain[i] = gain_;
  }

  const auto [lo, hi] = spec_.rhythm_band_hz;
  const double w1 = 2.0 * std::numbers::pi * (lo + 0.25 * (hi - lo));
  const double w2 = 2.0 * std::numbers::pi * (lo + 0.75 * (hi - lo));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(channels_.size()), n);
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    auto& ch = channels_[c];
    const auto row = static_cast<Eigen::Index>(c);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = pink_gain_ * pink_step(ch.pink_state, ch.noise.normal());
      if (ch.rhythm && rhythm_amp_ > 0.0) {
        const double t = static_cast<double>(t_ + i) / fs;
        const double am = 1.0 + spec_.am_depth * std::sin(2.0 * std::numbers::pi * ch.am_freq_hz * t + ch.am_phase);
        v += gain[i] * rhythm_amp_ * am * (std::sin(w1 * t + ch.phase[0]) + std::sin(w2 * t + ch.phase[1]));
      }
      if (ch.artifact_scale > 0.0)
        v += ch.artifact_scale * cascade_step(artifact_filter_, ch.artifact_state, ch.artifact_noise.normal());
      out(row, i) = v;
    }
  }
  t_ += n;
  return out;
}

EegRecording generate_recording(const SynthSpec& spec, const ProtocolSpec& protocol) {
  SynthEngine engine(spec);
  EegRecording rec;
  rec.sample_rate_hz = spec.sample_rate_hz;
  rec.channel_names = spec.channel_names;
  const LabelStream labels = LabelStream::alternating(protocol.epoch_s, protocol.total_s, protocol.first);
  const auto total = static_cast<Eigen::Index>(std::llround(protocol.total_s * spec.sample_rate_hz));
  rec.samples.resize(static_cast<Eigen::Index>(spec.n_channels()), total);
  const auto& tr = labels.transitions();
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto begin = static_cast<Eigen::Index>(std::llround(tr[k].time_s * spec.sample_rate_hz));
    const auto end = k + 1 < tr.size()
                         ? static_cast<Eigen::Index>(std::llround(tr[k + 1].time_s * spec.sample_rate_hz))
                         : total;
    rec.samples.middleCols(begin, end - begin) = engine.generate(end - begin, tr[k].state);
  }
  rec.labels = labels;
  return rec;
}

TimedScript::TimedScript(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
  if (intervals_.empty()) throw InvalidInput("intent script is empty");
  double expected = 0.0;
  for (const auto& iv : intervals_) {
    if (std::abs(iv.start_s - expected) > 1e-9)
      throw InvalidInput("intent script has a gap or overlap at " + std::to_string(expected) + " s");
    if (!(iv.end_s > iv.start_s)) throw InvalidInput("intent script interval must have positive length");
    expected = iv.end_s;
  }
}

TimedScript TimedScript::repeat(const std::vector<std::pair<double, BrainState>>& pattern, double total_s) {
  if (pattern.empty()) throw InvalidInput("intent pattern is empty");
  std::vector<Interval> out;
  double t = 0.0;
  while (t < total_s) {
    for (const auto& [len, state] : pattern) {
      if (!(len > 0.0)) throw InvalidInput("intent pattern durations must be positive");
      if (t >= total_s) break;
      const double end = std::min(t + len, total_s);
      out.push_back({t, end, state});
      t = end;
    }
  }
  return TimedScript(std::move(out));
}

TimedScript TimedScript::alternating(double block_s, double total_s, BrainState first) {
  return repeat({{block_s, first}, {block_s, other(first)}}, total_s);
}

BrainState TimedScript::at(double t_s) const {
  if (t_s < 0.0 || t_s >= end_s())
    throw SourceUnderrun("intent script ends at " + std::to_string(end_s()) + " s; asked for " +
                         std::to_string(t_s) + " s");
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), t_s,
                             [](double t, const Interval& iv) { return t < iv.end_s; });
  return it->state;
}

BrainState TimedScript::intent(const SessionView& view) { return at(view.time_s); }

BrainState ZoneSeekingPolicy::intent(const SessionView& view) {
  if (!view.track || !view.credits) throw InvalidInput("zone-seeking intent needs the session view");
  const Track& track = *view.track;
  for (std::size_t k = 0; k < track.n_npcs(); ++k) {
    if ((*view.credits)[k] >= 1.0) continue;
    if (view.position_m > track.zone_hi(k)) continue;  // overshot; cannot go back
    if (view.position_m >= track.zone_lo(k)) return BrainState::Idle;
    // Approaching: stop early while moving, walk on if stopped short.
    const bool near = view.position_m >= track.zone_lo(k) - lead_m_;
    return near && view.fsm_state == BrainState::Walk ? BrainState::Idle : BrainState::Walk;
  }
  return BrainState::Walk;
}

SyntheticSource::SyntheticSource(const SynthSpec& spec, std::shared_ptr<IntentPolicy> policy, double segment_len_s)
    : engine_(spec),
      policy_(std::move(policy)),
      segment_samples_(static_cast<Eigen::Index>(std::llround(segment_len_s * spec.sample_rate_hz))) {
  if (!policy_) throw InvalidInput("synthetic source needs an intent policy");
  if (segment_samples_ <= 0) throw InvalidInput("segment length must be positive");
}

Segment SyntheticSource::next(const SessionView& view) {
  const BrainState intent = policy_->intent(view);
  Segment s{engine_.generate(segment_samples_, intent), intent};
  ++emitted_;
  return s;
}

std::unique_ptr<SyntheticSource> stream_segments(const SynthSpec& spec, const TimedScript& script) {
  return std::make_unique<SyntheticSource>(spec, std::make_shared<TimedScript>(script));
}

}  // namespace bciwalk

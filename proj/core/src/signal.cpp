#include "bciwalk/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "bciwalk/error.hpp"
#include "bciwalk/spectral.hpp"

namespace bciwalk {

Eigen::MatrixXd common_average_reference(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2)
    throw InvalidInput("common average reference needs at least 2 channels");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  return samples.rowwise() - mean;
}

EegRecording common_average_reference(const EegRecording& rec) {
  rec.validate();
  EegRecording out = rec;
  out.samples = common_average_reference(rec.samples);
  return out;
}

namespace {

enum class EdgeKind { LowPass, HighPass };

// Bilinear-transform biquad of one Butterworth pole pair, prewarped at f0.
Biquad butterworth_section(EdgeKind kind, double f0, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s;
  if (kind == EdgeKind::LowPass) {
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
  } else {
    s.b0 = (1.0 + cw) / 2.0 / a0;
    s.b1 = -(1.0 + cw) / a0;
  }
  s.b2 = s.b0;
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

void append_edge(std::vector<Biquad>& out, EdgeKind kind, double f0, double fs, int order) {
  for (int k = 0; k < order / 2; ++k) {
    const double q = 1.0 / (2.0 * std::sin(std::numbers::pi * (2 * k + 1) / (2.0 * order)));
    out.push_back(butterworth_section(kind, f0, fs, q));
  }
}

// Section states that hold the cascade at rest under a unit constant input.
std::vector<std::array<double, 2>> steady_state(const std::vector<Biquad>& sections) {
  std::vector<std::array<double, 2>> zi(sections.size());
  double level = 1.0;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& s = sections[i];
    const double g = s.dc_gain();
    const double z2 = s.b2 - s.a2 * g;
    const double z1 = s.b1 - s.a1 * g + z2;
    zi[i] = {z1 * level, z2 * level};
    level *= g;
  }
  return zi;
}

void run_cascade(const std::vector<Biquad>& sections, std::vector<std::array<double, 2>> state,
                 std::vector<double>& data) {
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (double& v : data) {
      const double x = v;
      const double y = s.b0 * x + z1;
      z1 = s.b1 * x - s.a1 * y + z2;
      z2 = s.b2 * x - s.a2 * y;
      v = y;
    }
  }
}

}  // namespace

BandpassFilter::BandpassFilter(double sample_rate_hz, const BandpassConfig& cfg)
    : sample_rate_hz_(sample_rate_hz) {
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("sample rate must be positive");
  if (!(cfg.lo_hz >= 0.0) || !(cfg.lo_hz < cfg.hi_hz) || !(cfg.hi_hz < sample_rate_hz / 2.0))
    throw InvalidInput("band-pass edges must satisfy 0 <= lo < hi < fs/2");
  if (cfg.order < 2 || cfg.order % 2 != 0)
    throw InvalidInput("band-pass order must be a positive even number");
  if (cfg.lo_hz > 0.0) append_edge(sections_, EdgeKind::HighPass, cfg.lo_hz, sample_rate_hz, cfg.order);
  append_edge(sections_, EdgeKind::LowPass, cfg.hi_hz, sample_rate_hz, cfg.order);
}

double BandpassFilter::magnitude(double freq_hz) const {
  const std::complex<double> z1 =
      std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate_hz_);
  const std::complex<double> z2 = z1 * z1;
  double mag = 1.0;
  for (const auto& s : sections_)
    mag *= std::abs((s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2));
  return mag;
}

Eigen::VectorXd BandpassFilter::filter(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::vector<double> data(x.data(), x.data() + x.size());
  run_cascade(sections_, std::vector<std::array<double, 2>>(sections_.size(), {0.0, 0.0}), data);
  return Eigen::Map<Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Eigen::VectorXd BandpassFilter::filtfilt(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto n = static_cast<std::size_t>(x.size());
  if (n < 2) return x;
  const std::size_t edge = std::min(padding(), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * edge);
  for (std::size_t i = edge; i >= 1; --i) ext.push_back(2.0 * x[0] - x[static_cast<Eigen::Index>(i)]);
  for (std::size_t i = 0; i < n; ++i) ext.push_back(x[static_cast<Eigen::Index>(i)]);
  for (std::size_t i = 1; i <= edge; ++i)
    ext.push_back(2.0 * x[static_cast<Eigen::Index>(n - 1)] - x[static_cast<Eigen::Index>(n - 1 - i)]);

  const auto unit = steady_state(sections_);
  auto scaled = [&](double v) {
    auto zi = unit;
    for (auto& z : zi) z = {z[0] * v, z[1] * v};
    return zi;
  };
  run_cascade(sections_, scaled(ext.front()), ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sections_, scaled(ext.front()), ext);
  std::reverse(ext.begin(), ext.end());

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] = ext[edge + i];
  return y;
}

Eigen::MatrixXd BandpassFilter::apply(const Eigen::MatrixXd& samples) const {
  Eigen::MatrixXd out(samples.rows(), samples.cols());
  for (Eigen::Index c = 0; c < samples.rows(); ++c) out.row(c) = filtfilt(samples.row(c).transpose()).transpose();
  return out;
}

EegRecording bandpass(const EegRecording& rec, double lo_hz, double hi_hz, int order) {
  rec.validate();
  const BandpassFilter filter(rec.sample_rate_hz, {lo_hz, hi_hz, order});
  EegRecording out = rec;
  out.samples = filter.apply(rec.samples);
  return out;
}

ChannelMask ChannelMask::all(std::size_t n_channels) {
  ChannelMask m;
  m.retained.resize(n_channels);
  for (std::size_t i = 0; i < n_channels; ++i) m.retained[i] = i;
  return m;
}

Eigen::VectorXd emg_band_power(const EegRecording& rec, const ArtifactRejectionConfig& cfg) {
  rec.validate();
  const auto n = rec.n_samples();
  auto win = static_cast<Eigen::Index>(std::llround(cfg.window_s * rec.sample_rate_hz));
  if (win > n) win = n;
  if (win <= 0) throw InvalidInput("recording too short for band power estimation");
  const Eigen::Index n_windows = n / win;
  Eigen::VectorXd power = Eigen::VectorXd::Zero(rec.n_channels());
  for (Eigen::Index w = 0; w < n_windows; ++w) {
    const Eigen::MatrixXd bins =
        psd_bins(rec.samples.middleCols(w * win, win), rec.sample_rate_hz, cfg.band_lo_hz,
                 cfg.band_hi_hz);
    power += bins.colwise().sum().transpose();
  }
  return power / static_cast<double>(n_windows);
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

std::pair<EegRecording, ChannelMask> reject_artifact_channels(const EegRecording& rec,
                                                             const ArtifactRejectionConfig& cfg) {
  const Eigen::VectorXd power = emg_band_power(rec, cfg);
  std::vector<std::size_t> retained(static_cast<std::size_t>(rec.n_channels()));
  for (std::size_t i = 0; i < retained.size(); ++i) retained[i] = i;
  std::vector<ChannelExclusion> excluded;

  for (int pass = 1; !retained.empty(); ++pass) {
    std::vector<double> values;
    values.reserve(retained.size());
    for (auto c : retained) values.push_back(power[static_cast<Eigen::Index>(c)]);
    const double med = median_of(values);
    std::vector<double> dev;
    dev.reserve(values.size());
    for (double v : values) dev.push_back(std::abs(v - med));
    const double mad = std::max(1.4826 * median_of(dev), cfg.relative_mad_floor * std::abs(med));
    const double threshold = med + cfg.k * mad;

    std::vector<std::size_t> keep;
    bool dropped = false;
    for (auto c : retained) {
      const double p = power[static_cast<Eigen::Index>(c)];
      if (p > threshold) {
        excluded.push_back({c, "EMG band power " + std::to_string(p) + " exceeds " +
                                   std::to_string(threshold) + " (pass " + std::to_string(pass) + ")"});
        dropped = true;
      } else {
        keep.push_back(c);
      }
    }
    retained = std::move(keep);
    if (!dropped) break;
  }
  if (retained.empty()) throw DegenerateInput("artifact rejection excluded every channel");

  std::sort(excluded.begin(), excluded.end(),
            [](const ChannelExclusion& a, const ChannelExclusion& b) { return a.index < b.index; });
  ChannelMask mask{std::move(retained), std::move(excluded)};
  return {select_channels(rec, mask), mask};
}

EegRecording select_channels(const EegRecording& rec, const ChannelMask& mask) {
  EegRecording out;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.labels = rec.labels;
  out.samples.resize(static_cast<Eigen::Index>(mask.retained.size()), rec.n_samples());
  for (std::size_t i = 0; i < mask.retained.size(); ++i) {
    const auto c = mask.retained[i];
    if (c >= static_cast<std::size_t>(rec.n_channels())) throw InvalidInput("channel mask out of range");
    out.samples.row(static_cast<Eigen::Index>(i)) = rec.samples.row(static_cast<Eigen::Index>(c));
    out.channel_names.push_back(rec.channel_names.at(c));
  }
  return out;
}

EegRecording align_labels(const EegRecording& rec, const LabelStream& labels, double offset_s) {
  const double duration = rec.duration_s();
  const auto& tr = labels.transitions();
  std::vector<LabelTransition> shifted;
  std::optional<BrainState> state_at_zero;
  bool any_inside = false;
  for (const auto& t : tr) {
    const double time = t.time_s + offset_s;
    if (time < 0.0) {
      state_at_zero = t.state;
    } else if (time < duration) {
      any_inside = true;
      if (shifted.empty() && state_at_zero && time > 0.0) shifted.push_back({0.0, *state_at_zero});
      shifted.push_back({time, t.state});
    }
  }
  if (!any_inside) {
    throw InvalidInput("label transitions fall entirely outside the recording after offset " +
                       std::to_string(offset_s) + " s");
  }
  EegRecording out = rec;
  out.labels = LabelStream(std::move(shifted));
  return out;
}

}  // namespace bciwalk

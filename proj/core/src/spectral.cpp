#include "bciwalk/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "bciwalk/error.hpp"

namespace bciwalk {

int bin_count(double f_min_hz, double f_max_hz) {
  if (!(f_max_hz > f_min_hz)) throw InvalidInput("bin range must satisfy f_min < f_max");
  return static_cast<int>(std::ceil((f_max_hz - f_min_hz) / 2.0 - 1e-9));
}

Eigen::MatrixXd psd_bins(const Eigen::Ref<const Eigen::MatrixXd>& window, double sample_rate_hz,
                         double f_min_hz, double f_max_hz, Taper taper) {
  const auto n = window.cols();
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("sample rate must be positive");
  if (static_cast<double>(n) < sample_rate_hz / 2.0)
    throw InvalidInput("window of " + std::to_string(n) +
                       " samples is too short for 2-Hz resolution");
  if (f_min_hz < 0.0 || f_max_hz > sample_rate_hz / 2.0 + 1e-9)
    throw InvalidInput("bin range must lie within [0, fs/2]");
  const int n_bins = bin_count(f_min_hz, f_max_hz);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (taper == Taper::Hann) {
    for (Eigen::Index i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  }
  // With no taper this is 1/n^2, the Parseval normalization.
  const double norm = 1.0 / (static_cast<double>(n) * w.squaredNorm());

  const double df = sample_rate_hz / static_cast<double>(n);
  const bool keep_nyquist = std::abs(f_max_hz - sample_rate_hz / 2.0) < 1e-9;
  // Bin of each one-sided coefficient, or -1 when outside the range.
  std::vector<int> bin_of(static_cast<std::size_t>(n / 2 + 1), -1);
  for (Eigen::Index k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * df;
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    if (f + 1e-9 < f_min_hz) continue;
    if (f >= f_max_hz - 1e-9 && !(nyquist && keep_nyquist)) continue;
    const int b = std::min(n_bins - 1, static_cast<int>(std::floor((f - f_min_hz) / 2.0 + 1e-9)));
    bin_of[static_cast<std::size_t>(k)] = b;
  }

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_bins, window.rows());
  Eigen::FFT<double> fft;
  std::vector<double> buffer(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> spectrum;
  for (Eigen::Index c = 0; c < window.rows(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) buffer[static_cast<std::size_t>(i)] = window(c, i) * w[i];
    fft.fwd(spectrum, buffer);
    for (Eigen::Index k = 0; k <= n / 2; ++k) {
      const int b = bin_of[static_cast<std::size_t>(k)];
      if (b < 0) continue;
      const bool edge = k == 0 || ((n % 2 == 0) && k == n / 2);
      out(b, c) += (edge ? 1.0 : 2.0) * std::norm(spectrum[static_cast<std::size_t>(k)]) * norm;
    }
  }
  return out;
}

std::array<std::size_t, 2> TrialSet::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& t : trials) ++counts[index_of(t.label)];
  return counts;
}

std::vector<std::size_t> place_windows(std::size_t span_len, std::size_t window_len, int count,
                                       Rng& rng, int attempts) {
  const auto need = window_len * static_cast<std::size_t>(count);
  if (count <= 0 || window_len == 0) throw InvalidInput("window placement needs positive sizes");
  if (span_len < need) throw DegenerateInput("span too short for the requested windows");
  const std::size_t positions = span_len - window_len + 1;
  const std::size_t slack = span_len - need;

  if (slack > 0) {
    for (int attempt = 0; attempt < attempts; ++attempt) {
      std::vector<std::size_t> starts;
      bool ok = true;
      for (int j = 0; j < count && ok; ++j) {
        ok = false;
        for (int draw = 0; draw < 100; ++draw) {
          const auto s = static_cast<std::size_t>(rng.below(positions));
          const bool overlaps = std::any_of(starts.begin(), starts.end(), [&](std::size_t o) {
            return s < o + window_len && o < s + window_len;
          });
          if (!overlaps) {
            starts.push_back(s);
            ok = true;
            break;
          }
        }
      }
      if (ok) {
        std::sort(starts.begin(), starts.end());
        return starts;
      }
    }
  }

  // Stratified fallback: sorted uniform gaps over the slack.
  std::vector<std::size_t> offsets(static_cast<std::size_t>(count));
  for (auto& o : offsets) o = slack == 0 ? 0 : static_cast<std::size_t>(rng.below(slack + 1));
  std::sort(offsets.begin(), offsets.end());
  std::vector<std::size_t> starts(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j) starts[j] = offsets[j] + j * window_len;
  return starts;
}

TrialSet extract_trials(const EegRecording& rec, std::uint64_t rng_seed,
                        const TrialExtractionConfig& cfg) {
  rec.validate();
  if (!rec.labels || rec.labels->empty())
    throw InvalidInput("trial extraction needs a labeled recording");
  const double fs = rec.sample_rate_hz;
  const auto window_len = static_cast<std::size_t>(std::llround(cfg.trial_len_s * fs));

  Rng rng(rng_seed);
  TrialSet set;
  const auto segments = rec.labels->segments(rec.duration_s());
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const auto& seg = segments[si];
    const auto first = static_cast<std::size_t>(std::ceil(seg.start_s * fs - 1e-9));
    const auto last = static_cast<std::size_t>(std::floor(seg.end_s * fs + 1e-9));
    const std::size_t len = last > first ? last - first : 0;
    if (static_cast<double>(len) < cfg.min_segment_s * fs - 1e-9)
      throw DegenerateInput("label segment " + std::to_string(si) + " (" + std::string(to_string(seg.state)) +
                            ", " + std::to_string(seg.start_s) + "-" + std::to_string(seg.end_s) +
                            " s) is shorter than " + std::to_string(cfg.min_segment_s) + " s");
    const auto starts = place_windows(len, window_len, cfg.trials_per_segment, rng, cfg.placement_attempts);
    for (auto s : starts) {
      const auto begin = static_cast<Eigen::Index>(first + s);
      SpectralTrial trial;
      trial.bins = psd_bins(rec.samples.middleCols(begin, static_cast<Eigen::Index>(window_len)), fs,
                            cfg.f_min_hz, cfg.f_max_hz, cfg.taper);
      trial.label = seg.state;
      trial.start_s = static_cast<double>(begin) / fs;
      trial.end_s = static_cast<double>(begin + static_cast<Eigen::Index>(window_len)) / fs;
      set.trials.push_back(std::move(trial));
    }
  }
  return set;
}

}  // namespace bciwalk

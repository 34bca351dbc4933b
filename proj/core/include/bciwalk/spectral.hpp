#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "bciwalk/recording.hpp"
#include "bciwalk/rng.hpp"

namespace bciwalk {

enum class Taper : std::uint8_t { None, Hann };

/// Number of 2-Hz bins covering [f_min, f_max).
int bin_count(double f_min_hz, double f_max_hz);

/// Binned one-sided periodogram of each row of `window` ([C x n_samples]).
///
/// Entry (b, c) is the power of channel c in [f_min + 2b, f_min + 2b + 2) Hz,
/// i.e. the periodogram PSD integrated over the bin. DC lands in bin 0 when
/// f_min is 0, and the Nyquist coefficient is kept only when f_max equals
/// fs/2. With no taper the bins over [0, fs/2] sum to the mean square of the
/// signal. Result is [B x C] with B = bin_count(f_min, f_max).
///
/// Requires n_samples >= fs/2 so every bin holds at least one coefficient.
Eigen::MatrixXd psd_bins(const Eigen::Ref<const Eigen::MatrixXd>& window, double sample_rate_hz,
                         double f_min_hz = 0.0, double f_max_hz = 40.0, Taper taper = Taper::None);

struct SpectralTrial {
  Eigen::MatrixXd bins;  // [B x C]
  BrainState label = BrainState::Idle;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct TrialSet {
  std::vector<SpectralTrial> trials;

  /// (n_idle, n_walk)
  std::array<std::size_t, 2> class_counts() const;
  std::size_t size() const { return trials.size(); }
};

struct TrialExtractionConfig {
  int trials_per_segment = 5;
  double trial_len_s = 4.0;
  double min_segment_s = 20.0;
  double f_min_hz = 0.0;
  double f_max_hz = 40.0;
  Taper taper = Taper::None;
  /// Attempts at sequential rejection placement before falling back to
  /// stratified placement.
  int placement_attempts = 200;
};

/// Start offsets (in samples, ascending) of `count` non-overlapping windows
/// of `window_len` inside a span of `span_len` samples.
///
/// Windows are drawn one at a time uniformly over all start positions,
/// redrawing any that overlap an earlier window. When an attempt cannot be
/// completed the whole set is redrawn, up to `attempts` times; after that
/// (or immediately when there is no slack) the slack is split by sorted
/// uniform draws, which is always feasible.
std::vector<std::size_t> place_windows(std::size_t span_len, std::size_t window_len, int count,
                                       Rng& rng, int attempts = 200);

/// Splits a labeled recording into its label segments and draws
/// `trials_per_segment` random non-overlapping trials from each, returning
/// their binned spectra. Deterministic for a given seed. Throws
/// DegenerateInput naming the first segment shorter than min_segment_s.
TrialSet extract_trials(const EegRecording& rec, std::uint64_t rng_seed,
                        const TrialExtractionConfig& cfg = {});

}  // namespace bciwalk

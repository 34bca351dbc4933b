#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bciwalk/online.hpp"
#include "bciwalk/vre.hpp"

namespace bciwalk {

struct McSample {
  double s = 0.0;
  double t = 0.0;
  bool finished = false;
  bool censored = false;  // timed out; t clamped to the limit
};

struct McEnsemble {
  std::vector<McSample> samples;
  FsmConfig fsm;
  Track track;
  ScoringConfig scoring;
  std::uint64_t seed = 0;

  std::size_t n_runs() const { return samples.size(); }
  std::size_t n_censored() const;
  std::vector<std::array<double, 2>> points() const;
};

/// One random-walk session: i.i.d. Uniform(0, 1) posteriors every tick
/// through the same smoother, state machine and simulator as a live run.
SessionResult random_walk_session(const FsmConfig& fsm, const Track& track, const ScoringConfig& scoring,
                                  Rng& rng);

/// n independent runs; run i uses Rng(seed).child(i), so the ensemble does
/// not depend on scheduling.
McEnsemble random_walk_mc(const FsmConfig& fsm, const Track& track = Track::make_default(), int n = 1000,
                          std::uint64_t seed = 1, const ScoringConfig& scoring = {});

void write_ensemble_csv(const McEnsemble& e, std::ostream& out);

enum class BandwidthRule : std::uint8_t { Silverman, Botev };
std::string_view to_string(BandwidthRule r);
BandwidthRule parse_bandwidth_rule(std::string_view s);

/// Bandwidth of one axis: Silverman's normal-reference rule for a product
/// kernel in d dimensions, h = sigma * (4 / ((d + 2) n))^(1 / (d + 4)) with
/// sigma = min(sd, IQR / 1.349) (sd alone when the IQR is 0).
double silverman_bandwidth(std::span<const double> x, int dims = 2);

/// Improved Sheather-Jones bandwidth via the linear diffusion fixed point
/// (Botev, Grotowski and Kroese). Returns 0 when no fixed point exists.
double botev_bandwidth(std::span<const double> x);

/// Product-Gaussian Parzen-Rosenblatt density in 2D. An axis with zero
/// spread gets a zero bandwidth and acts as an exact-match indicator;
/// when both axes are degenerate the estimate is a point mass.
class Kde2d {
 public:
  Kde2d(std::vector<std::array<double, 2>> points, BandwidthRule rule = BandwidthRule::Silverman);
  Kde2d(std::vector<std::array<double, 2>> points, std::array<double, 2> bandwidth);

  double density(std::array<double, 2> x) const;
  /// density() at every sample point, computed once.
  const std::vector<double>& sample_densities() const;

  const std::vector<std::array<double, 2>>& points() const { return points_; }
  std::array<double, 2> bandwidth() const { return h_; }
  std::array<bool, 2> degenerate_axes() const { return {h_[0] == 0.0, h_[1] == 0.0}; }
  bool point_mass() const { return h_[0] == 0.0 && h_[1] == 0.0; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Midpoint-rule integral over the sample range padded by 5 bandwidths;
  /// degenerate axes are summed exactly.
  double total_mass(int grid = 200) const;

 private:
  void init_cache();

  std::vector<std::array<double, 2>> points_;
  std::array<double, 2> h_{};
  std::vector<std::string> warnings_;
  std::vector<double> cache_;
};

Kde2d fit_kde(const McEnsemble& e, BandwidthRule rule = BandwidthRule::Silverman);

/// Mass of the density lying outside the density contour through
/// `observed`, estimated as the fraction of sample points whose density is
/// below the density at `observed`.
double p_value(const Kde2d& kde, std::array<double, 2> observed);

struct CompositeConstants {
  double s_max = 10.0;
  double t_min = 201.52;
  double t_max = 1200.0;
};

struct CompositeScore {
  double c = 0.0;
  double c_s = 0.0;
  double c_t = 0.0;
  bool clamped = false;
};

/// c = sqrt(c_s c_t), c_s = s / s_max, c_t = (t_max - t) / (t_max - t_min).
/// Throws InvalidInput outside 0 <= s <= s_max, t_min <= t <= t_max.
CompositeScore composite(double s, double t, const CompositeConstants& k = {});
/// Same with t clamped into range first (flagged); for censored runs.
CompositeScore composite_clamped(double s, double t, const CompositeConstants& k = {});

struct Purposefulness {
  double p = 1.0;
  bool purposeful = false;
};

/// purposeful = finished within the limit and p < alpha.
Purposefulness purposefulness(const SessionResult& session, const Kde2d& kde, double alpha = 0.01);

}  // namespace bciwalk

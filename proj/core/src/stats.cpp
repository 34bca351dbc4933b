#include "bciwalk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "bciwalk/error.hpp"
#include "bciwalk/parallel.hpp"

namespace bciwalk {

std::size_t McEnsemble::n_censored() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const McSample& s) { return s.censored; }));
}

std::vector<std::array<double, 2>> McEnsemble::points() const {
  std::vector<std::array<double, 2>> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back({s.s, s.t});
  return pts;
}

SessionResult random_walk_session(const FsmConfig& fsm, const Track& track, const ScoringConfig& scoring, Rng& rng) {
  SessionRunner runner(track, fsm, scoring);
  while (!runner.done()) runner.tick(rng.uniform());
  return runner.result();
}

McEnsemble random_walk_mc(const FsmConfig& fsm, const Track& track, int n, std::uint64_t seed,
                          const ScoringConfig& scoring) {
  if (n <= 0) throw InvalidInput("Monte Carlo run count must be positive");
  fsm.validate_ordering();
  track.validate();
  McEnsemble e;
  e.fsm = fsm;
  e.track = track;
  e.scoring = scoring;
  e.seed = seed;
  e.samples.resize(static_cast<std::size_t>(n));
  const Rng master(seed);
  parallel_for(e.samples.size(), [&](std::size_t i) {
    Rng rng = master.child(i);
    const SessionResult r = random_walk_session(fsm, track, scoring, rng);
    e.samples[i] = McSample{r.stops_score, r.completion_time_s, r.finished, !r.finished};
  });
  return e;
}

void write_ensemble_csv(const McEnsemble& e, std::ostream& out) {
  out << "run,stops,time_s,finished,censored\n";
  char buf[128];
  for (std::size_t i = 0; i < e.samples.size(); ++i) {
    const auto& s = e.samples[i];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d,%d\n", i, s.s, s.t, s.finished ? 1 : 0, s.censored ? 1 : 0);
    out << buf;
  }
}

std::string_view to_string(BandwidthRule r) { return r == BandwidthRule::Botev ? "botev" : "silverman"; }

BandwidthRule parse_bandwidth_rule(std::string_view s) {
  if (s == "silverman") return BandwidthRule::Silverman;
  if (s == "botev") return BandwidthRule::Botev;
  throw InvalidInput("unknown bandwidth rule '" + std::string(s) + "'");
}

namespace {

double type7_quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double sample_sd(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Unnormalized DCT-II with the first coefficient halved relative to the rest.
std::vector<double> dct2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> a(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      s += x[j] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(j) + 1.0) /
                           (2.0 * static_cast<double>(n)));
    a[k] = (k == 0 ? 1.0 : 2.0) * s;
  }
  return a;
}

double isj_fixed_point(double t, double n, const std::vector<double>& I, const std::vector<double>& a2) {
  constexpr int l = 7;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  auto functional = [&](int s, double time) {
    double f = 0.0;
    for (std::size_t i = 0; i < I.size(); ++i) f += std::pow(I[i], s) * a2[i] * std::exp(-I[i] * pi2 * time);
    return 2.0 * std::pow(std::numbers::pi, 2 * s) * f;
  };
  double f = functional(l, t);
  for (int s = l - 1; s >= 2; --s) {
    double k0 = 1.0;
    for (int j = 1; j <= 2 * s - 1; j += 2) k0 *= j;
    k0 /= std::sqrt(2.0 * std::numbers::pi);
    const double c = (1.0 + std::pow(0.5, s + 0.5)) / 3.0;
    const double time = std::pow(2.0 * c * k0 / n / f, 2.0 / (3.0 + 2.0 * s));
    f = functional(s, time);
  }
  return t - std::pow(2.0 * n * std::sqrt(std::numbers::pi) * f, -0.4);
}

}  // namespace

double silverman_bandwidth(std::span<const double> x, int dims) {
  if (x.size() < 2) return 0.0;
  const double sd = sample_sd(x);
  if (!(sd > 0.0)) return 0.0;
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = type7_quantile(sorted, 0.75) - type7_quantile(sorted, 0.25);
  const double sigma = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
  const double n = static_cast<double>(x.size());
  return sigma * std::pow(4.0 / ((dims + 2.0) * n), 1.0 / (dims + 4.0));
}

double botev_bandwidth(std::span<const double> x) {
  constexpr std::size_t kGrid = 1024;
  if (x.size() < 2) return 0.0;
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double range = *mx - *mn;
  if (!(range > 0.0)) return 0.0;
  const double lo = *mn - range / 2.0;
  const double span = 2.0 * range;
  std::vector<double> hist(kGrid, 0.0);
  for (double v : x) {
    auto b = static_cast<std::size_t>((v - lo) / span * static_cast<double>(kGrid));
    hist[std::min(b, kGrid - 1)] += 1.0;
  }
  for (double& h : hist) h /= static_cast<double>(x.size());
  const auto a = dct2(hist);
  std::vector<double> I(kGrid - 1), a2(kGrid - 1);
  for (std::size_t k = 1; k < kGrid; ++k) {
    I[k - 1] = static_cast<double>(k * k);
    a2[k - 1] = (a[k] / 2.0) * (a[k] / 2.0);
  }
  const double n = static_cast<double>(x.size());
  double t_lo = 0.0, t_hi = 0.1;
  double f_lo = isj_fixed_point(t_lo, n, I, a2);
  const double f_hi = isj_fixed_point(t_hi, n, I, a2);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi) || (f_lo > 0) == (f_hi > 0)) return 0.0;
  for (int it = 0; it < 200 && t_hi - t_lo > 1e-14; ++it) {
    const double mid = 0.5 * (t_lo + t_hi);
    const double fm = isj_fixed_point(mid, n, I, a2);
    if (!std::isfinite(fm)) return 0.0;
    if ((fm > 0) == (f_lo > 0)) {
      t_lo = mid;
      f_lo = fm;
    } else {
      t_hi = mid;
    }
  }
  return std::sqrt(0.5 * (t_lo + t_hi)) * span;
}

Kde2d::Kde2d(std::vector<std::array<double, 2>> points, BandwidthRule rule) : points_(std::move(points)) {
  if (points_.empty()) throw InvalidInput("KDE needs at least one sample");
  for (int d = 0; d < 2; ++d) {
    std::vector<double> axis(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) axis[i] = points_[i][static_cast<std::size_t>(d)];
    double h = silverman_bandwidth(axis);
    if (rule == BandwidthRule::Botev && h > 0.0) {
      const double hb = botev_bandwidth(axis);
      if (hb > 0.0)
        h = hb;
      else
        warnings_.push_back("axis " + std::to_string(d) + ": diffusion bandwidth has no fixed point, using Silverman");
    }
    h_[static_cast<std::size_t>(d)] = h;
    if (h == 0.0) warnings_.push_back("axis " + std::to_string(d) + " has zero spread; treated as exact match");
  }
  init_cache();
}

Kde2d::Kde2d(std::vector<std::array<double, 2>> points, std::array<double, 2> bandwidth)
    : points_(std::move(points)), h_(bandwidth) {
  if (points_.empty()) throw InvalidInput("KDE needs at least one sample");
  if (!(h_[0] >= 0.0) || !(h_[1] >= 0.0)) throw InvalidInput("KDE bandwidth must be non-negative");
  init_cache();
}

namespace {

double kernel_1d(double d, double h) {
  if (h == 0.0) return d == 0.0 ? 1.0 : 0.0;
  const double z = d / h;
  return std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

double Kde2d::density(std::array<double, 2> x) const {
  double sum = 0.0;
  for (const auto& p : points_) {
    const double kx = kernel_1d(x[0] - p[0], h_[0]);
    if (kx == 0.0) continue;
    sum += kx * kernel_1d(x[1] - p[1], h_[1]);
  }
  return sum / static_cast<double>(points_.size());
}

// Leave-one-out: each sample is scored against the other n - 1, so that it
// is comparable with a fresh observation that does not sit on a kernel.
void Kde2d::init_cache() {
  cache_.assign(points_.size(), 0.0);
  if (points_.size() < 2) return;
  const double norm = 1.0 / static_cast<double>(points_.size() - 1);
  parallel_for(points_.size(), [&](std::size_t i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < points_.size(); ++j) {
      if (j == i) continue;
      const double kx = kernel_1d(points_[i][0] - points_[j][0], h_[0]);
      if (kx == 0.0) continue;
      sum += kx * kernel_1d(points_[i][1] - points_[j][1], h_[1]);
    }
    cache_[i] = sum * norm;
  });
}

const std::vector<double>& Kde2d::sample_densities() const { return cache_; }

double Kde2d::total_mass(int grid) const {
  if (grid < 2) throw InvalidInput("grid must have at least 2 cells per axis");
  if (point_mass()) return 1.0;
  // Axis values to integrate over: a midpoint grid, or the distinct sample
  // values with unit weight when the axis is an indicator.
  std::array<std::vector<std::pair<double, double>>, 2> nodes;
  for (std::size_t d = 0; d < 2; ++d) {
    if (h_[d] == 0.0) {
      std::vector<double> v;
      for (const auto& p : points_) v.push_back(p[d]);
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      for (double u : v) nodes[d].emplace_back(u, 1.0);
      continue;
    }
    double lo = points_[0][d], hi = points_[0][d];
    for (const auto& p : points_) {
      lo = std::min(lo, p[d]);
      hi = std::max(hi, p[d]);
    }
    lo -= 5.0 * h_[d];
    hi += 5.0 * h_[d];
    const double step = (hi - lo) / grid;
    for (int i = 0; i < grid; ++i) nodes[d].emplace_back(lo + (i + 0.5) * step, step);
  }
  double mass = 0.0;
  for (const auto& [x, wx] : nodes[0])
    for (const auto& [y, wy] : nodes[1]) mass += density({x, y}) * wx * wy;
  return mass;
}

Kde2d fit_kde(const McEnsemble& e, BandwidthRule rule) { return Kde2d(e.points(), rule); }

double p_value(const Kde2d& kde, std::array<double, 2> observed) {
  if (kde.point_mass()) return observed == kde.points().front() ? 1.0 : 0.0;
  const double f = kde.density(observed);
  const auto& dens = kde.sample_densities();
  const auto below = std::count_if(dens.begin(), dens.end(), [f](double d) { return d < f; });
  return static_cast<double>(below) / static_cast<double>(dens.size());
}

CompositeScore composite(double s, double t, const CompositeConstants& k) {
  if (!(s >= 0.0 && s <= k.s_max))
    throw InvalidInput("stop score " + std::to_string(s) + " outside [0, " + std::to_string(k.s_max) + "]");
  if (!(t >= k.t_min && t <= k.t_max))
    throw InvalidInput("completion time " + std::to_string(t) + " s outside [" + std::to_string(k.t_min) + ", " +
                       std::to_string(k.t_max) + "]");
  CompositeScore c;
  c.c_s = s / k.s_max;
  c.c_t = (k.t_max - t) / (k.t_max - k.t_min);
  c.c = std::sqrt(c.c_s * c.c_t);
  return c;
}

CompositeScore composite_clamped(double s, double t, const CompositeConstants& k) {
  const double tc = std::clamp(t, k.t_min, k.t_max);
  CompositeScore c = composite(s, tc, k);
  c.clamped = tc != t;
  return c;
}

Purposefulness purposefulness(const SessionResult& session, const Kde2d& kde, double alpha) {
  Purposefulness out;
  out.p = p_value(kde, {session.stops_score, session.completion_time_s});
  out.purposeful = session.finished && out.p < alpha;
  return out;
}

}  // namespace bciwalk

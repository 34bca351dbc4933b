#include "bciwalk/online.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <thread>

#include "bciwalk/error.hpp"
#include "bciwalk/spectral.hpp"

namespace bciwalk {

std::size_t FsmConfig::history_len() const {
  return static_cast<std::size_t>(std::max(1.0, std::round(smoothing_window_s / segment_len_s)));
}

void FsmConfig::validate_ordering() const {
  if (!std::isfinite(t_idle) || !std::isfinite(t_walk))
    throw InvalidInput("thresholds must be finite");
  if (t_idle > t_walk)
    throw InvalidInput("thresholds need T_I <= T_W (got T_I=" + std::to_string(t_idle) +
                       ", T_W=" + std::to_string(t_walk) + ")");
  if (!(segment_len_s > 0.0) || !(smoothing_window_s >= segment_len_s))
    throw InvalidInput("smoothing window must be at least one positive segment length");
}

void FsmConfig::validate() const {
  validate_ordering();
  if (t_idle < 0.0 || t_walk > 1.0)
    throw InvalidInput("thresholds need 0 <= T_I <= T_W <= 1 (got T_I=" + std::to_string(t_idle) +
                       ", T_W=" + std::to_string(t_walk) + ")");
}

PosteriorWindow::PosteriorWindow(std::size_t capacity) : values_(capacity, 0.0) {
  if (capacity == 0) throw InvalidInput("posterior window needs capacity >= 1");
}

void PosteriorWindow::push(double p) {
  values_[head_] = p;
  head_ = (head_ + 1) % values_.size();
  size_ = std::min(size_ + 1, values_.size());
}

void PosteriorWindow::clear() {
  head_ = 0;
  size_ = 0;
}

std::vector<double> PosteriorWindow::values() const {
  std::vector<double> out;
  out.reserve(size_);
  const std::size_t cap = values_.size();
  for (std::size_t i = 0; i < size_; ++i) out.push_back(values_[(head_ + cap - size_ + i) % cap]);
  return out;
}

double PosteriorWindow::mean() const {
  const auto v = values();
  return smooth(v);
}

double smooth(std::span<const double> history) {
  if (history.empty() || history.size() > 3)
    throw InvalidInput("smoothing needs between 1 and 3 posteriors");
  return std::accumulate(history.begin(), history.end(), 0.0) / static_cast<double>(history.size());
}

BrainState fsm_transition(BrainState current, double smoothed, const FsmConfig& cfg) {
  if (current == BrainState::Idle) return smoothed > cfg.t_walk ? BrainState::Walk : BrainState::Idle;
  return smoothed < cfg.t_idle ? BrainState::Idle : BrainState::Walk;
}

FsmState make_fsm_state(const FsmConfig& cfg) {
  FsmState s;
  s.history = PosteriorWindow(cfg.history_len());
  return s;
}

FsmState fsm_step(const FsmState& state, double smoothed, const FsmConfig& cfg) {
  FsmState next = state;
  next.state = fsm_transition(state.state, smoothed, cfg);
  next.clock_s = state.clock_s + cfg.segment_len_s;
  return next;
}

double fsm_observe(FsmState& state, double posterior, const FsmConfig& cfg) {
  state.history.push(posterior);
  const double p = state.history.mean();
  state.state = fsm_transition(state.state, p, cfg);
  state.clock_s += cfg.segment_len_s;
  return p;
}

OnlineDecoder::OnlineDecoder(const DecodingModel& model)
    : model_(model),
      filter_(model.sample_rate_hz, model.bandpass),
      segment_samples_(static_cast<Eigen::Index>(std::llround(0.5 * model.sample_rate_hz))) {
  model_.band.validate();
  if (model_.channel_names.size() < 2) throw InvalidInput("model has fewer than 2 raw channels");
  for (auto c : model_.channel_mask.retained)
    if (c >= model_.channel_names.size()) throw InvalidInput("model channel mask exceeds its montage");
}

FeatureValue OnlineDecoder::decode(const Eigen::Ref<const Eigen::MatrixXd>& segment) const {
  const auto raw = static_cast<Eigen::Index>(model_.channel_names.size());
  if (segment.rows() != raw)
    throw InvalidInput("segment has " + std::to_string(segment.rows()) + " channels, model expects " +
                       std::to_string(raw));
  if (segment.cols() != segment_samples_)
    throw InvalidInput("segment has " + std::to_string(segment.cols()) + " samples, expected " +
                       std::to_string(segment_samples_));
  const Eigen::MatrixXd referenced = common_average_reference(Eigen::MatrixXd(segment));
  const auto& kept = model_.channel_mask.retained;
  Eigen::MatrixXd filtered(static_cast<Eigen::Index>(kept.size()), segment.cols());
  for (std::size_t i = 0; i < kept.size(); ++i)
    filtered.row(static_cast<Eigen::Index>(i)) =
        filter_.filtfilt(referenced.row(static_cast<Eigen::Index>(kept[i])).transpose()).transpose();
  const Eigen::MatrixXd bins =
      psd_bins(filtered, model_.sample_rate_hz, model_.band.lo_hz, model_.band.hi_hz);
  const Eigen::VectorXd vec = bins.reshaped();
  return extract_feature(vec, model_.classifier);
}

double process_segment(const Eigen::Ref<const Eigen::MatrixXd>& segment, const DecodingModel& model,
                       double segment_len_s) {
  const OnlineDecoder decoder(model);
  const auto expected = static_cast<Eigen::Index>(std::llround(segment_len_s * model.sample_rate_hz));
  if (segment.cols() != expected)
    throw InvalidInput("segment has " + std::to_string(segment.cols()) + " samples, expected " +
                       std::to_string(expected));
  return decoder.process_segment(segment);
}

Histogram make_histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi) {
  if (n_bins == 0 || !(hi > lo)) throw InvalidInput("histogram needs bins and hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(n_bins, 0)};
  for (double v : values) {
    const double pos = (v - lo) / (hi - lo) * static_cast<double>(n_bins);
    const auto b = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(n_bins - 1)));
    ++h.counts[b];
  }
  return h;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(i);
  return values[i] + frac * (values[i + 1] - values[i]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

FsmConfig CalibrationReport::thresholds(FsmConfig base) const {
  base.t_idle = std::min(suggested_t_idle, suggested_t_walk);
  base.t_walk = std::max(suggested_t_idle, suggested_t_walk);
  return base;
}

CalibrationReport calibrate(std::span<const double> posteriors, std::span<const BrainState> conditions) {
  if (posteriors.size() != conditions.size())
    throw InvalidInput("calibration posteriors and conditions differ in length");
  CalibrationReport r;
  for (std::size_t i = 0; i < posteriors.size(); ++i)
    (conditions[i] == BrainState::Idle ? r.idle_posteriors : r.walk_posteriors).push_back(posteriors[i]);
  if (r.idle_posteriors.empty() || r.walk_posteriors.empty())
    throw InvalidInput("calibration stream must contain both idle and walk conditions");
  r.idle_histogram = make_histogram(r.idle_posteriors);
  r.walk_histogram = make_histogram(r.walk_posteriors);
  for (std::size_t i = 0; i < 3; ++i) {
    const double q = 0.25 * static_cast<double>(i + 1);
    r.idle_quartiles[i] = quantile(r.idle_posteriors, q);
    r.walk_quartiles[i] = quantile(r.walk_posteriors, q);
  }
  r.suggested_t_idle = r.idle_quartiles[1];
  r.suggested_t_walk = r.walk_quartiles[1];
  r.separable = r.suggested_t_idle < r.suggested_t_walk;
  return r;
}

void save_thresholds(const FsmConfig& cfg, const std::filesystem::path& path) {
  cfg.validate();
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["t_idle"] = cfg.t_idle;
  j["t_walk"] = cfg.t_walk;
  j["smoothing_window_s"] = cfg.smoothing_window_s;
  j["segment_len_s"] = cfg.segment_len_s;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

FsmConfig load_thresholds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open thresholds file '" + path.string() + "'");
  FsmConfig cfg;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format_version").get<int>() != 1) throw FormatError("unsupported thresholds format version");
    cfg.t_idle = j.at("t_idle").get<double>();
    cfg.t_walk = j.at("t_walk").get<double>();
    cfg.smoothing_window_s = j.value("smoothing_window_s", cfg.smoothing_window_s);
    cfg.segment_len_s = j.value("segment_len_s", cfg.segment_len_s);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("thresholds file '" + path.string() + "': " + e.what());
  }
  cfg.validate();
  return cfg;
}

RealTimeClock::RealTimeClock() : start_(std::chrono::steady_clock::now()) {}

double RealTimeClock::now_s() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void RealTimeClock::wait_until(double t_s) {
  std::this_thread::sleep_until(start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                             std::chrono::duration<double>(t_s)));
}

}  // namespace bciwalk

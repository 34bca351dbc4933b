#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bciwalk/stats.hpp"
#include "bciwalk/vre.hpp"

namespace bciwalk::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Bad flags, missing input files, invalid configuration. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TelemetryEndpoint {
  bool enabled = false;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  /// Pace segments on the wall clock instead of simulated time.
  bool realtime = false;
  /// How long to wait for a dashboard before starting; 0 starts at once.
  double wait_for_client_s = 0.0;

  friend bool operator==(const TelemetryEndpoint&, const TelemetryEndpoint&) = default;
};

/// Shared configuration file. Command-line flags override its fields.
struct RunConfig {
  std::optional<fs::path> recording;
  std::optional<fs::path> model;
  std::optional<fs::path> thresholds;
  std::optional<fs::path> synth_spec;
  fs::path output_dir = ".";
  std::optional<std::array<double, 2>> thresholds_override;  // (t_idle, t_walk)
  Track track = Track::make_default();
  ScoringConfig scoring;
  int mc_runs = 1000;
  std::uint64_t mc_seed = 1;
  BandwidthRule bandwidth = BandwidthRule::Silverman;
  std::uint64_t seed = 1;
  TelemetryEndpoint telemetry;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline constexpr int kRunConfigVersion = 1;

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const fs::path& path);
void save_run_config(const RunConfig& c, const fs::path& path);

/// Throws UsageError naming the path when it does not exist.
void require_file(const fs::path& path, const char* what);

struct SynthArgs {
  std::optional<fs::path> spec;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<double> erd_depth;
  double epoch_s = 30.0;
  double total_s = 600.0;
};

struct TrainArgs {
  fs::path recording;
  fs::path out;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> shuffle_labels_seed;
  std::optional<fs::path> weights_csv;
  std::vector<std::string> methods{"lda", "aida"};
};

/// Where live segments come from. A synthetic source follows either the
/// zone-seeking operator or a repeated script such as "walk:20,idle:2.5".
struct SourceArgs {
  std::optional<fs::path> recording;
  std::optional<fs::path> synth_spec;
  std::uint64_t seed = 2;
  std::string policy = "zone";
  std::optional<std::string> script;
};

struct CalibrateArgs {
  fs::path model;
  fs::path out;
  SourceArgs source;
  double duration_s = 120.0;
  double block_s = 15.0;
  /// With a dashboard attached, wait this long for the operator to confirm
  /// or replace the suggested thresholds.
  double confirm_timeout_s = 0.0;
  TelemetryEndpoint telemetry;
};

struct SessionArgs {
  std::optional<fs::path> model;
  std::optional<fs::path> thresholds;
  std::optional<std::array<double, 2>> thresholds_override;
  SourceArgs source;
  std::optional<fs::path> replay;  // recompute from a session log instead
  fs::path out;
  std::optional<fs::path> log;
  Track track = Track::make_default();
  ScoringConfig scoring;
  bool start_paused = false;
  TelemetryEndpoint telemetry;
};

struct EvaluateArgs {
  std::vector<fs::path> results;
  std::optional<fs::path> thresholds;
  std::optional<std::array<double, 2>> thresholds_override;
  Track track = Track::make_default();
  ScoringConfig scoring;
  int n = 1000;
  std::uint64_t seed = 1;
  BandwidthRule bandwidth = BandwidthRule::Silverman;
  std::optional<fs::path> ensemble_csv;
  std::optional<fs::path> report_csv;
};

// Each command prints its report to `out` and diagnostics to `err`, and
// throws UsageError or a pipeline exception on failure.
void cmd_synth(const SynthArgs& a, std::ostream& out);
void cmd_train(const TrainArgs& a, std::ostream& out);
void cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err);
SessionResult cmd_session(const SessionArgs& a, std::ostream& out);
void cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err);

/// Parses "walk:20,idle:2.5" into (duration, state) pairs.
std::vector<std::pair<double, BrainState>> parse_script(const std::string& text);

/// Full command line: parses, dispatches, maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bciwalk::cli

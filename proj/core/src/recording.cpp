#include "bciwalk/recording.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "bciwalk/error.hpp"

namespace bciwalk {

LabelStream::LabelStream(std::vector<LabelTransition> transitions)
    : transitions_(std::move(transitions)) {
  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    const auto& t = transitions_[i];
    if (!std::isfinite(t.time_s) || t.time_s < 0.0)
      throw InvalidInput("label transition times must be finite and non-negative");
    if (i > 0) {
      if (t.time_s <= transitions_[i - 1].time_s)
        throw InvalidInput("label transition times must be strictly increasing");
      if (t.state == transitions_[i - 1].state)
        throw InvalidInput("label states must alternate between idle and walk");
    }
  }
}

std::optional<BrainState> LabelStream::state_at(double t) const {
  auto it = std::upper_bound(transitions_.begin(), transitions_.end(), t,
                             [](double v, const LabelTransition& tr) { return v < tr.time_s; });
  if (it == transitions_.begin()) return std::nullopt;
  return std::prev(it)->state;
}

std::vector<LabelSegment> LabelStream::segments(double duration_s) const {
  std::vector<LabelSegment> out;
  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    const double start = transitions_[i].time_s;
    if (start >= duration_s) break;
    const double end = i + 1 < transitions_.size()
                           ? std::min(transitions_[i + 1].time_s, duration_s)
                           : duration_s;
    out.push_back({start, end, transitions_[i].state});
  }
  return out;
}

LabelStream LabelStream::alternating(double epoch_s, double total_s, BrainState first) {
  if (!(epoch_s > 0.0) || !(total_s > 0.0))
    throw InvalidInput("alternating labels need positive epoch and total durations");
  std::vector<LabelTransition> tr;
  BrainState s = first;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * epoch_s;
    if (t >= total_s) break;
    tr.push_back({t, s});
    s = other(s);
  }
  return LabelStream(std::move(tr));
}

void EegRecording::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw InvalidInput("sample rate must be positive");
  if (n_channels() < 2)
    throw InvalidInput("a recording needs at least 2 channels");
  if (static_cast<Eigen::Index>(channel_names.size()) != n_channels())
    throw InvalidInput("channel name count does not match sample rows");
}

std::optional<std::size_t> EegRecording::channel_index(const std::string& name) const {
  auto it = std::find(channel_names.begin(), channel_names.end(), name);
  if (it == channel_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - channel_names.begin());
}

const std::vector<std::string>& default_channel_names() {
  static const std::vector<std::string> names = {
      "Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8", "F7",  "F5",  "F3",
      "F1",  "Fz",  "F2",  "F4",  "F6",  "F8",  "FT7", "FC5", "FC3", "FC1", "FCz",
      "FC2", "FC4", "FC6", "FT8", "T7",  "C5",  "C3",  "C1",  "Cz",  "C2",  "C4",
      "C6",  "T8",  "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8",
      "P7",  "P5",  "P3",  "P1",  "Pz",  "P2",  "P4",  "P6",  "P8",  "PO7", "PO5",
      "PO3", "POz", "PO4", "PO6", "PO8", "O1",  "Oz",  "O2"};
  return names;
}

namespace {

constexpr std::string_view kMagic = "BCIWALK-RECORDING";
constexpr int kVersion = 1;

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("bad number '" + s + "' in recording header");
  return v;
}

std::string expect_line(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("recording header truncated");
  if (line.rfind(key, 0) != 0 || (line.size() > key.size() && line[key.size()] != ' '))
    throw FormatError("expected '" + std::string(key) + "' in recording header, got '" + line + "'");
  return line.size() > key.size() ? line.substr(key.size() + 1) : std::string{};
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  } else {
    return v;
  }
}

}  // namespace

void write_recording(const EegRecording& rec, std::ostream& out) {
  rec.validate();
  out << kMagic << ' ' << kVersion << '\n';
  out << "sample_rate_hz " << format_double(rec.sample_rate_hz) << '\n';
  out << "n_channels " << rec.n_channels() << '\n';
  out << "n_samples " << rec.n_samples() << '\n';
  out << "channels";
  for (const auto& name : rec.channel_names) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
      throw InvalidInput("channel names must be non-empty and contain no whitespace");
    out << ' ' << name;
  }
  out << '\n';
  const auto& tr = rec.labels ? rec.labels->transitions() : std::vector<LabelTransition>{};
  out << "labels " << tr.size() << '\n';
  for (const auto& t : tr) out << format_double(t.time_s) << ' ' << to_string(t.state) << '\n';
  out << "data f32le\n";

  std::vector<std::uint32_t> row(static_cast<std::size_t>(rec.n_samples()));
  for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
    for (Eigen::Index i = 0; i < rec.n_samples(); ++i) {
      const auto f = static_cast<float>(rec.samples(c, i));
      row[static_cast<std::size_t>(i)] = to_little_endian(std::bit_cast<std::uint32_t>(f));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw FormatError("failed writing recording");
}

void write_recording(const EegRecording& rec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_recording(rec, out);
}

EegRecording read_recording(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty recording file");
  {
    std::istringstream ss(line);
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kMagic) throw FormatError("not a recording container");
    if (version != kVersion)
      throw FormatError("unsupported recording version " + std::to_string(version));
  }
  EegRecording rec;
  rec.sample_rate_hz = parse_double(expect_line(in, "sample_rate_hz"));
  const long long n_channels = std::stoll(expect_line(in, "n_channels"));
  const long long n_samples = std::stoll(expect_line(in, "n_samples"));
  if (n_channels <= 0 || n_samples < 0) throw FormatError("bad recording dimensions");
  {
    std::istringstream ss(expect_line(in, "channels"));
    std::string name;
    while (ss >> name) rec.channel_names.push_back(name);
  }
  const long long n_labels = std::stoll(expect_line(in, "labels"));
  if (n_labels < 0) throw FormatError("bad label count");
  if (n_labels > 0) {
    std::vector<LabelTransition> tr;
    for (long long k = 0; k < n_labels; ++k) {
      if (!std::getline(in, line)) throw FormatError("label list truncated");
      const auto sp = line.find(' ');
      if (sp == std::string::npos) throw FormatError("bad label line '" + line + "'");
      tr.push_back({parse_double(line.substr(0, sp)), parse_brain_state(line.substr(sp + 1))});
    }
    rec.labels = LabelStream(std::move(tr));
  }
  if (expect_line(in, "data") != "f32le") throw FormatError("unsupported sample encoding");

  rec.samples.resize(n_channels, n_samples);
  std::vector<std::uint32_t> row(static_cast<std::size_t>(n_samples));
  for (long long c = 0; c < n_channels; ++c) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)))
      throw FormatError("recording sample block truncated");
    for (long long i = 0; i < n_samples; ++i)
      rec.samples(c, i) = std::bit_cast<float>(to_little_endian(row[static_cast<std::size_t>(i)]));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after recording samples");
  rec.validate();
  return rec;
}

EegRecording read_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open recording '" + path.string() + "'");
  return read_recording(in);
}

}  // namespace bciwalk

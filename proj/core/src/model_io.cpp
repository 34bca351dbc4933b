#include "bciwalk/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "bciwalk/error.hpp"

namespace bciwalk {

namespace {

constexpr std::string_view kMagic = "BCIWALK-MODEL 1";

std::string hex(double v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

class Writer {
 public:
  void line(std::string_view key, const std::string& rest) { out_ << key << ' ' << rest << '\n'; }
  void real(std::string_view key, double v) { line(key, hex(v)); }
  void matrix(std::string_view name, const Eigen::MatrixXd& m) {
    out_ << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out_ << (c ? " " : "") << hex(m(r, c));
      out_ << '\n';
    }
  }
  std::string str() const { return out_.str(); }
  std::ostringstream& raw() { return out_; }

 private:
  std::ostringstream out_;
};

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::string_view next_line() {
    if (pos_ >= text_.size()) throw FormatError("model file truncated at line " + std::to_string(line_no_ + 1));
    const auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) throw FormatError("model file line " + std::to_string(line_no_ + 1) + " is unterminated");
    std::string_view l = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    return l;
  }

  /// Returns the value part of a "key value" line, checking the key.
  std::string_view field(std::string_view key) {
    const auto l = next_line();
    if (l.size() <= key.size() || l.substr(0, key.size()) != key || l[key.size()] != ' ')
      fail("expected field '" + std::string(key) + "'");
    return l.substr(key.size() + 1);
  }

  double real(std::string_view key) { return parse_hex(field(key)); }

  template <class Int>
  Int integer(std::string_view s) {
    Int v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad integer '" + std::string(s) + "'");
    return v;
  }

  std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
      const auto j = s.find(' ', i);
      const auto end = j == std::string_view::npos ? s.size() : j;
      if (end > i) out.push_back(s.substr(i, end - i));
      i = end + 1;
    }
    return out;
  }

  double parse_hex(std::string_view s) {
    std::uint64_t bits = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), bits, 16);
    if (s.size() != 16 || ec != std::errc() || p != s.data() + s.size()) fail("bad hex value '" + std::string(s) + "'");
    return std::bit_cast<double>(bits);
  }

  Eigen::MatrixXd matrix(std::string_view name) {
    const auto w = words(field("matrix"));
    if (w.size() != 3 || w[0] != name) fail("expected matrix '" + std::string(name) + "'");
    const auto rows = integer<Eigen::Index>(w[1]);
    const auto cols = integer<Eigen::Index>(w[2]);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto values = words(next_line());
      if (static_cast<Eigen::Index>(values.size()) != cols) fail("matrix row has wrong length");
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_hex(values[static_cast<std::size_t>(c)]);
    }
    return m;
  }

  std::size_t position() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("model file line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string serialize_model(const DecodingModel& model) {
  Writer w;
  w.raw() << kMagic << '\n';
  w.real("sample_rate_hz", model.sample_rate_hz);
  std::string names = std::to_string(model.channel_names.size());
  for (const auto& n : model.channel_names) {
    if (n.empty() || n.find_first_of(" \t\n") != std::string::npos)
      throw InvalidInput("channel name '" + n + "' cannot be stored (empty or contains whitespace)");
    names += ' ' + n;
  }
  w.line("channels", names);
  w.line("bandpass", hex(model.bandpass.lo_hz) + ' ' + hex(model.bandpass.hi_hz) + ' ' +
                         std::to_string(model.bandpass.order));
  std::string retained = std::to_string(model.channel_mask.retained.size());
  for (auto i : model.channel_mask.retained) retained += ' ' + std::to_string(i);
  w.line("retained", retained);
  w.line("excluded", std::to_string(model.channel_mask.excluded.size()));
  for (const auto& e : model.channel_mask.excluded) {
    std::string reason = e.reason;
    for (auto& ch : reason)
      if (ch == '\n' || ch == '\r') ch = ' ';
    w.line("exclude", std::to_string(e.index) + ' ' + reason);
  }
  w.line("band", std::to_string(model.band.lo_hz) + ' ' + std::to_string(model.band.hi_hz));
  const auto& clf = model.classifier;
  w.line("method", std::string(to_string(clf.method)));
  w.line("combination", std::string(to_string(clf.combination)));
  w.line("priors", hex(clf.priors[0]) + ' ' + hex(clf.priors[1]));
  w.line("cv_accuracy", hex(model.cv_accuracy_mean) + ' ' + hex(model.cv_accuracy_std));
  w.real("p_value", model.p_value);
  w.line("seed", std::to_string(model.seed));
  w.line("trial_counts", std::to_string(model.trial_counts[0]) + ' ' + std::to_string(model.trial_counts[1]));
  for (auto k : {BrainState::Idle, BrainState::Walk}) {
    const auto& s = clf.subspaces[index_of(k)];
    w.line("subspace", std::string(to_string(k)));
    w.line("principal_dims", std::to_string(s.principal_dims));
    w.line("rank_deficient", s.rank_deficient ? "1" : "0");
    w.line("feature_idle", hex(s.feature_models[0].mean) + ' ' + hex(s.feature_models[0].variance));
    w.line("feature_walk", hex(s.feature_models[1].mean) + ' ' + hex(s.feature_models[1].variance));
    w.real("mean_residual", s.mean_residual);
    w.matrix("basis", s.basis);
    w.matrix("discriminant", s.discriminant);
    w.matrix("class_mean", s.class_mean);
  }
  std::string body = w.str();
  char crc[9];
  std::snprintf(crc, sizeof crc, "%08x", static_cast<unsigned>(crc_of(body)));
  body += "crc32 ";
  body += crc;
  body += '\n';
  return body;
}

DecodingModel deserialize_model(std::string_view text) {
  const auto crc_pos = text.rfind("crc32 ");
  if (crc_pos == std::string_view::npos || (crc_pos > 0 && text[crc_pos - 1] != '\n'))
    throw FormatError("model file has no checksum line");
  const std::string_view body = text.substr(0, crc_pos);
  std::uint32_t stored = 0;
  {
    const auto digits = text.substr(crc_pos + 6);
    const auto nl = digits.find('\n');
    if (nl != 8 || digits.size() != 9) throw FormatError("model checksum line is malformed");
    const auto [p, ec] = std::from_chars(digits.data(), digits.data() + 8, stored, 16);
    if (ec != std::errc() || p != digits.data() + 8) throw FormatError("model checksum line is malformed");
  }
  if (crc_of(body) != stored) throw FormatError("model checksum mismatch; the file is corrupt or was edited");

  Reader r(body);
  if (r.next_line() != kMagic) throw FormatError("not a bciwalk model file (bad magic line)");
  DecodingModel m;
  m.sample_rate_hz = r.real("sample_rate_hz");
  {
    const auto w = r.words(r.field("channels"));
    if (w.empty() || r.integer<std::size_t>(w[0]) != w.size() - 1) r.fail("channel count mismatch");
    for (std::size_t i = 1; i < w.size(); ++i) m.channel_names.emplace_back(w[i]);
  }
  {
    const auto w = r.words(r.field("bandpass"));
    if (w.size() != 3) r.fail("bandpass needs 3 values");
    m.bandpass = {r.parse_hex(w[0]), r.parse_hex(w[1]), r.integer<int>(w[2])};
  }
  {
    const auto w = r.words(r.field("retained"));
    if (w.empty() || r.integer<std::size_t>(w[0]) != w.size() - 1) r.fail("retained count mismatch");
    for (std::size_t i = 1; i < w.size(); ++i) m.channel_mask.retained.push_back(r.integer<std::size_t>(w[i]));
  }
  const auto n_excluded = r.integer<std::size_t>(r.field("excluded"));
  for (std::size_t i = 0; i < n_excluded; ++i) {
    const auto v = r.field("exclude");
    const auto sp = v.find(' ');
    ChannelExclusion e;
    e.index = r.integer<std::size_t>(v.substr(0, sp));
    if (sp != std::string_view::npos) e.reason = std::string(v.substr(sp + 1));
    m.channel_mask.excluded.push_back(std::move(e));
  }
  {
    const auto w = r.words(r.field("band"));
    if (w.size() != 2) r.fail("band needs 2 values");
    m.band = {r.integer<int>(w[0]), r.integer<int>(w[1])};
  }
  auto& clf = m.classifier;
  try {
    clf.method = parse_discriminant_method(r.field("method"));
    clf.combination = parse_subspace_combination(r.field("combination"));
  } catch (const FormatError& e) {
    r.fail(e.what());
  }
  auto pair = [&](std::string_view key) {
    const auto w = r.words(r.field(key));
    if (w.size() != 2) r.fail(std::string(key) + " needs 2 values");
    return std::array<double, 2>{r.parse_hex(w[0]), r.parse_hex(w[1])};
  };
  clf.priors = pair("priors");
  const auto cv = pair("cv_accuracy");
  m.cv_accuracy_mean = cv[0];
  m.cv_accuracy_std = cv[1];
  m.p_value = r.real("p_value");
  m.seed = r.integer<std::uint64_t>(r.field("seed"));
  {
    const auto w = r.words(r.field("trial_counts"));
    if (w.size() != 2) r.fail("trial_counts needs 2 values");
    m.trial_counts = {r.integer<std::size_t>(w[0]), r.integer<std::size_t>(w[1])};
  }
  for (auto k : {BrainState::Idle, BrainState::Walk}) {
    auto& s = clf.subspaces[index_of(k)];
    if (r.field("subspace") != to_string(k)) r.fail("subspaces out of order");
    s.principal_dims = r.integer<Eigen::Index>(r.field("principal_dims"));
    s.rank_deficient = r.integer<int>(r.field("rank_deficient")) != 0;
    const auto fi = pair("feature_idle");
    const auto fw = pair("feature_walk");
    s.feature_models = {ClassGaussian{fi[0], fi[1]}, ClassGaussian{fw[0], fw[1]}};
    s.mean_residual = r.real("mean_residual");
    s.basis = r.matrix("basis");
    s.discriminant = r.matrix("discriminant");
    s.class_mean = r.matrix("class_mean");
    if (s.discriminant.rows() != 1 || s.discriminant.cols() != s.basis.cols() ||
        s.class_mean.cols() != 1 || s.class_mean.rows() != s.basis.rows())
      r.fail("subspace matrix shapes are inconsistent");
  }
  if (r.position() != body.size()) r.fail("unexpected content before checksum");
  if (clf.subspaces[0].basis.rows() != clf.subspaces[1].basis.rows() ||
      clf.subspaces[0].basis.rows() !=
          static_cast<Eigen::Index>(m.band.n_bins()) * static_cast<Eigen::Index>(m.channel_mask.retained.size()))
    throw FormatError("model dimensions do not match band and channel mask");
  return m;
}

void save_model(const DecodingModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

DecodingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

void write_weight_map_csv(const DecodingModel& model, std::ostream& out) {
  out << "subspace,channel,bin_lo_hz,weight\n";
  char num[32];
  for (auto k : {BrainState::Idle, BrainState::Walk}) {
    const Eigen::MatrixXd w = weight_map(model, k);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const auto raw = model.channel_mask.retained[static_cast<std::size_t>(c)];
      const std::string& name =
          raw < model.channel_names.size() ? model.channel_names[raw] : std::to_string(raw);
      for (Eigen::Index b = 0; b < w.rows(); ++b) {
        std::snprintf(num, sizeof num, "%.10g", w(b, c));
        out << to_string(k) << ',' << name << ',' << model.band.lo_hz + 2 * b << ',' << num << '\n';
      }
    }
  }
}

}  // namespace bciwalk

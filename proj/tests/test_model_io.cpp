#include <doctest.h>

#include <fstream>
#include <sstream>

#include "bciwalk/error.hpp"
#include "bciwalk/model_io.hpp"
#include "fixtures.hpp"

using namespace bciwalk;

namespace {

void check_same(const DecodingModel& a, const DecodingModel& b) {
  CHECK(a.sample_rate_hz == b.sample_rate_hz);
  CHECK(a.channel_names == b.channel_names);
  CHECK(a.bandpass == b.bandpass);
  CHECK(a.channel_mask == b.channel_mask);
  CHECK(a.band == b.band);
  CHECK(a.cv_accuracy_mean == b.cv_accuracy_mean);
  CHECK(a.cv_accuracy_std == b.cv_accuracy_std);
  CHECK(a.p_value == b.p_value);
  CHECK(a.seed == b.seed);
  CHECK(a.trial_counts == b.trial_counts);
  CHECK(a.classifier.priors == b.classifier.priors);
  CHECK(a.classifier.method == b.classifier.method);
  CHECK(a.classifier.combination == b.classifier.combination);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& x = a.classifier.subspaces[k];
    const auto& y = b.classifier.subspaces[k];
    CHECK(x.basis == y.basis);
    CHECK(x.discriminant == y.discriminant);
    CHECK(x.feature_models == y.feature_models);
    CHECK(x.class_mean == y.class_mean);
    CHECK(x.mean_residual == y.mean_residual);
    CHECK(x.principal_dims == y.principal_dims);
    CHECK(x.rank_deficient == y.rank_deficient);
  }
}

}  // namespace

TEST_CASE("model text round-trips exactly") {
  const DecodingModel& m = testing::trained_model();
  const std::string text = serialize_model(m);
  const DecodingModel back = deserialize_model(text);
  check_same(m, back);
  CHECK(serialize_model(back) == text);
}

TEST_CASE("model file round-trip through disk") {
  const auto dir = testing::scratch_dir("model_io");
  const DecodingModel& m = testing::trained_model();
  save_model(m, dir / "a.txt");
  const DecodingModel back = load_model(dir / "a.txt");
  save_model(back, dir / "b.txt");
  CHECK(testing::read_file(dir / "a.txt") == testing::read_file(dir / "b.txt"));
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(m.classifier.input_dim(), 0.0, 1.0);
  CHECK(extract_feature(v, back.classifier).p_walk == extract_feature(v, m.classifier).p_walk);
}

TEST_CASE("corruption is detected") {
  const std::string text = serialize_model(testing::trained_model());
  SUBCASE("flipped digit") {
    std::string bad = text;
    const auto pos = bad.find("matrix");
    REQUIRE(pos != std::string::npos);
    const auto digit = bad.find_first_of("0123456789abcdef", bad.find('\n', pos) + 1);
    bad[digit] = bad[digit] == '0' ? '1' : '0';
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
  }
  SUBCASE("truncated") {
    CHECK_THROWS_AS(deserialize_model(text.substr(0, text.size() / 2)), FormatError);
  }
  SUBCASE("missing checksum") {
    const auto pos = text.rfind("crc32");
    CHECK_THROWS_AS(deserialize_model(text.substr(0, pos)), FormatError);
  }
  SUBCASE("bad magic") {
    CHECK_THROWS_AS(deserialize_model("HELLO\n"), FormatError);
  }
}

TEST_CASE("missing model file") {
  CHECK_THROWS(load_model(testing::scratch_dir("model_io_missing") / "none.txt"));
}

TEST_CASE("weight map CSV") {
  const DecodingModel& m = testing::trained_model();
  std::ostringstream out;
  write_weight_map_csv(m, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "subspace,channel,bin_lo_hz,weight");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * m.channel_mask.retained.size() * static_cast<std::size_t>(m.band.n_bins()));
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bciwalk/decoder.hpp"
#include "bciwalk/error.hpp"
#include "fixtures.hpp"

using namespace bciwalk;

namespace {

// Two Gaussian clouds in D dims, walk shifted by `shift` along axis 0.
Dataset two_clouds(int n_per_class, int d, double shift, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.x.resize(2 * n_per_class, d);
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const bool walk = i % 2 == 1;
    for (int j = 0; j < d; ++j) data.x(i, j) = rng.normal() * (1.0 + 0.3 * j);
    if (walk) data.x(i, 0) += shift;
    data.y.push_back(walk ? BrainState::Walk : BrainState::Idle);
  }
  return data;
}

}  // namespace

TEST_CASE("band validation") {
  CHECK_NOTHROW((Band{8, 30}.validate()));
  CHECK(Band{8, 30}.n_bins() == 11);
  CHECK(Band{8, 30}.first_bin() == 4);
  CHECK_THROWS_AS((Band{9, 30}.validate()), InvalidInput);
  CHECK_THROWS_AS((Band{30, 30}.validate()), InvalidInput);
  CHECK_THROWS_AS((Band{0, 42}.validate()), InvalidInput);
}

TEST_CASE("vectorize is channel-major over the band rows") {
  Eigen::MatrixXd bins(20, 3);
  for (int b = 0; b < 20; ++b)
    for (int c = 0; c < 3; ++c) bins(b, c) = 100 * c + b;
  const Eigen::VectorXd v = vectorize(bins, {4, 10});
  REQUIRE(v.size() == 9);
  CHECK(v[0] == 2);
  CHECK(v[2] == 4);
  CHECK(v[3] == 102);
  CHECK(v[8] == 204);
}

TEST_CASE("Gaussian Bayes posterior") {
  const std::array<ClassGaussian, 2> g{ClassGaussian{0.0, 1.0}, ClassGaussian{1.0, 1.0}};
  const std::array<double, 2> even{0.5, 0.5};
  CHECK(posterior_walk(2.0, g, even) == doctest::Approx(0.8175745).epsilon(1e-6));
  CHECK(posterior_walk(0.5, g, even) == doctest::Approx(0.5));
  CHECK(posterior_walk(-1.0, g, even) == doctest::Approx(1.0 - posterior_walk(2.0, g, even)));
  double prev = 0.0;
  for (double f = -5.0; f <= 6.0; f += 0.25) {
    const double p = posterior_walk(f, g, even);
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(posterior_walk(1e4, g, even) == doctest::Approx(1.0));
  CHECK(std::isfinite(posterior_walk(-1e4, g, even)));
}

TEST_CASE("chance p-values over 100 trials") {
  CHECK(chance_p_value(0.605) == doctest::Approx(0.0176).epsilon(0.01));
  CHECK(chance_p_value(0.620) == doctest::Approx(0.010489).epsilon(1e-3));
  CHECK(chance_p_value(0.622) == doctest::Approx(0.0060165).epsilon(1e-3));
  CHECK(chance_p_value(0.719) == doctest::Approx(6.2896e-6).epsilon(1e-3));
  CHECK(chance_p_value(0.50) == doctest::Approx(0.5398).epsilon(1e-3));
  CHECK(chance_p_value(0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(chance_p_value(1.5), InvalidInput);
}

TEST_CASE("CPCA keeps a planar class in two dimensions") {
  Rng rng(3);
  Dataset data;
  data.x = Eigen::MatrixXd::Zero(80, 8);
  for (int i = 0; i < 80; ++i) {
    data.x(i, 0) = 5.0 * rng.normal();
    data.x(i, 1) = 3.0 * rng.normal();
    data.x(i, 2) = i % 2 ? 1.0 : 0.0;
    data.y.push_back(i % 2 ? BrainState::Walk : BrainState::Idle);
  }
  const auto bases = fit_cpca(data, {0.99, false});
  for (const auto& b : bases) {
    CHECK(b.principal_dims == 2);
    CHECK((b.basis.transpose() * b.basis - Eigen::MatrixXd::Identity(b.basis.cols(), b.basis.cols()))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
}

TEST_CASE("LDA direction matches a dense solve") {
  const Dataset data = two_clouds(60, 5, 1.5, 9);
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(5, 5);
  Eigen::VectorXd mu[2];
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd rows(60, 5);
    int k = 0;
    for (int i = 0; i < 120; ++i)
      if (static_cast<int>(data.y[i]) == c) rows.row(k++) = data.x.row(i);
    mu[c] = rows.colwise().mean().transpose();
    const Eigen::MatrixXd centered = rows.rowwise() - mu[c].transpose();
    sw += centered.transpose() * centered;
  }
  const Eigen::VectorXd expected = sw.fullPivLu().solve(mu[1] - mu[0]).normalized();
  const Eigen::RowVectorXd w = fit_discriminant(data.x, data.y, DiscriminantMethod::Lda);
  CHECK(w.norm() == doctest::Approx(1.0));
  CHECK((w.transpose() - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("discriminants point toward walk and AIDA does not lose information") {
  const Dataset data = two_clouds(80, 4, 2.0, 4);
  const auto lda = fit_discriminant(data.x, data.y, DiscriminantMethod::Lda);
  const auto aida = fit_discriminant(data.x, data.y, DiscriminantMethod::Aida);
  const auto counts = data.class_counts();
  for (const auto& w : {lda, aida}) {
    double idle = 0.0, walk = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i)
      (data.y[i] == BrainState::Walk ? walk : idle) += (w * data.x.row(i).transpose())(0);
    CHECK(walk / counts[1] > idle / counts[0]);
  }
  CHECK(aida_objective(data.x, data.y, aida) >= aida_objective(data.x, data.y, lda) - 1e-9);
}

TEST_CASE("swapping labels flips the discriminant") {
  Dataset data = two_clouds(50, 3, 2.0, 5);
  const auto w = fit_discriminant(data.x, data.y, DiscriminantMethod::Lda);
  for (auto& y : data.y) y = other(y);
  const auto w2 = fit_discriminant(data.x, data.y, DiscriminantMethod::Lda);
  CHECK((w + w2).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("separable clouds cross-validate perfectly") {
  const Dataset data = two_clouds(50, 6, 20.0, 6);
  const CvResult r = cross_validate(data, {}, {2, 10, 1});
  CHECK(r.mean == doctest::Approx(1.0));
  CHECK(r.fold_accuracies.size() == 20);
}

TEST_CASE("coin-flip labels stay near chance") {
  Dataset data = two_clouds(50, 6, 0.0, 7);
  const CvResult r = cross_validate(data, {}, {5, 10, 2});
  CHECK(r.mean > 0.35);
  CHECK(r.mean < 0.65);
}

TEST_CASE("cross-validation never fits on test rows") {
  const Dataset data = two_clouds(50, 4, 1.0, 8);
  int calls = 0;
  cross_validate(data, {}, {3, 10, 4}, [&](int, int, std::span<const std::size_t> train, std::span<const std::size_t> test) {
    ++calls;
    std::set<std::size_t> tr(train.begin(), train.end());
    for (auto t : test) REQUIRE(tr.count(t) == 0);
    CHECK(train.size() + test.size() == 100);
    std::array<int, 2> per_class{0, 0};
    for (auto t : test) ++per_class[static_cast<int>(data.y[t])];
    CHECK(per_class[0] == 5);
    CHECK(per_class[1] == 5);
  });
  CHECK(calls == 30);
}

TEST_CASE("cross-validation is deterministic per seed") {
  const Dataset data = two_clouds(50, 4, 1.0, 8);
  const auto a = cross_validate(data, {}, {2, 10, 11});
  const auto b = cross_validate(data, {}, {2, 10, 11});
  CHECK(a.fold_accuracies == b.fold_accuracies);
}

TEST_CASE("feature extraction checks its input size") {
  const Dataset data = two_clouds(30, 4, 2.0, 1);
  const Classifier clf = fit_classifier(data, {});
  CHECK_THROWS_AS(extract_feature(Eigen::VectorXd::Zero(5), clf), InvalidInput);
  const FeatureValue fv = extract_feature(data.x.row(0).transpose(), clf);
  CHECK(fv.p_walk >= 0.0);
  CHECK(fv.p_walk <= 1.0);
  CHECK(posterior(fv, clf) == doctest::Approx(fv.p_walk));
}

TEST_CASE("trained model on the synthetic subject") {
  const DecodingModel& m = testing::trained_model();
  CHECK(m.cv_accuracy_mean >= 0.9);
  CHECK(m.p_value < 1e-10);
  CHECK(m.trial_counts[0] == 50);
  CHECK(m.trial_counts[1] == 50);
  CHECK(m.channel_mask.total() == 63);
  CHECK(m.band.lo_hz < m.band.hi_hz);
  const Eigen::MatrixXd map = weight_map(m, BrainState::Walk);
  CHECK(map.rows() == m.band.n_bins());
  CHECK(map.cols() == static_cast<Eigen::Index>(m.channel_mask.retained.size()));
}

TEST_CASE("training is deterministic") {
  const EegRecording rec = generate_recording(SynthSpec{}, {30.0, 600.0});
  TrainingConfig cfg;
  cfg.methods = {DiscriminantMethod::Lda};
  cfg.cv_runs = 2;
  const auto a = train_model(rec, cfg);
  const auto b = train_model(rec, cfg);
  CHECK(a.model.band == b.model.band);
  CHECK(a.model.cv_accuracy_mean == b.model.cv_accuracy_mean);
  CHECK(a.model.classifier.subspaces[1].discriminant == b.model.classifier.subspaces[1].discriminant);
}

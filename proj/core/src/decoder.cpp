#include "bciwalk/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bciwalk/error.hpp"
#include "bciwalk/parallel.hpp"
#include "bciwalk/rng.hpp"

namespace bciwalk {

std::string_view to_string(DiscriminantMethod m) {
  return m == DiscriminantMethod::Lda ? "lda" : "aida";
}

std::string_view to_string(SubspaceCombination c) {
  return c == SubspaceCombination::Weighted ? "weighted" : "min-reconstruction";
}

DiscriminantMethod parse_discriminant_method(std::string_view s) {
  if (s == "lda" || s == "LDA") return DiscriminantMethod::Lda;
  if (s == "aida" || s == "AIDA") return DiscriminantMethod::Aida;
  throw FormatError("unknown discriminant method '" + std::string(s) + "'");
}

SubspaceCombination parse_subspace_combination(std::string_view s) {
  if (s == "weighted") return SubspaceCombination::Weighted;
  if (s == "min-reconstruction") return SubspaceCombination::MinReconstruction;
  throw FormatError("unknown subspace combination '" + std::string(s) + "'");
}

void Band::validate() const {
  if (lo_hz < 0 || hi_hz > 40 || lo_hz >= hi_hz || lo_hz % 2 != 0 || hi_hz % 2 != 0)
    throw InvalidInput("band must be [lo, hi) with even edges, 0 <= lo < hi <= 40; got [" +
                       std::to_string(lo_hz) + ", " + std::to_string(hi_hz) + ")");
}

Eigen::VectorXd vectorize(const Eigen::MatrixXd& full_bins, Band band) {
  band.validate();
  if (band.first_bin() + band.n_bins() > full_bins.rows())
    throw InvalidInput("band exceeds the available spectral bins");
  const Eigen::MatrixXd rows = full_bins.middleRows(band.first_bin(), band.n_bins());
  return rows.reshaped();
}

std::array<std::size_t, 2> Dataset::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (auto s : y) ++counts[index_of(s)];
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

Dataset make_dataset(const TrialSet& trials, Band band) {
  Dataset data;
  if (trials.trials.empty()) return data;
  const Eigen::Index dim = vectorize(trials.trials.front().bins, band).size();
  data.x.resize(static_cast<Eigen::Index>(trials.size()), dim);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials.trials[i];
    data.x.row(static_cast<Eigen::Index>(i)) = vectorize(t.bins, band).transpose();
    data.y.push_back(t.label);
  }
  return data;
}

namespace {

struct ClassStats {
  Eigen::MatrixXd rows;
  Eigen::VectorXd mean;
};

ClassStats class_rows(const Eigen::MatrixXd& x, std::span<const BrainState> y, BrainState c) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
  ClassStats s;
  s.rows.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) s.rows.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  s.mean = idx.empty() ? Eigen::VectorXd::Zero(x.cols()) : Eigen::VectorXd(s.rows.colwise().mean().transpose());
  return s;
}

void require_both_classes(std::span<const BrainState> y, std::size_t min_per_class, const char* what) {
  std::array<std::size_t, 2> counts{0, 0};
  for (auto s : y) ++counts[index_of(s)];
  if (counts[0] < min_per_class || counts[1] < min_per_class)
    throw InvalidInput(std::string(what) + " needs at least " + std::to_string(min_per_class) +
                       " trials per class (have " + std::to_string(counts[0]) + " idle, " +
                       std::to_string(counts[1]) + " walk)");
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& u) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(u.rows(), u.cols());
  // Keep each column pointing the same way as the input column.
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (q.col(j).dot(u.col(j)) < 0.0) q.col(j) *= -1.0;
  return q;
}

CpcaBasis principal_basis(const ClassStats& cls, double fraction) {
  const Eigen::Index n = cls.rows.rows();
  const Eigen::Index dim = cls.rows.cols();
  const Eigen::MatrixXd centered = cls.rows.rowwise() - cls.mean.transpose();

  Eigen::VectorXd lambda;  // descending
  Eigen::MatrixXd directions;
  if (n > dim) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered.transpose() * centered);
    lambda = es.eigenvalues().reverse();
    directions = es.eigenvectors().rowwise().reverse();
  } else {
    // Gram trick: eigenvectors of X X' map to principal directions X' v / sqrt(l).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered * centered.transpose());
    lambda = es.eigenvalues().reverse();
    const Eigen::MatrixXd v = es.eigenvectors().rowwise().reverse();
    directions = centered.transpose() * v;
    for (Eigen::Index j = 0; j < directions.cols(); ++j)
      directions.col(j) /= std::sqrt(std::max(lambda[j], std::numeric_limits<double>::min()));
  }
  lambda = lambda.cwiseMax(0.0);
  const double total = lambda.sum();

  CpcaBasis out;
  const double scale = std::max(1.0, cls.rows.cwiseAbs().maxCoeff());
  if (!(total > 1e-24 * scale * scale * static_cast<double>(dim))) {
    out.rank_deficient = true;
    out.principal_dims = 1;
    Eigen::VectorXd axis = cls.mean;
    if (axis.norm() == 0.0) axis = Eigen::VectorXd::Unit(dim, 0);
    out.basis = axis.normalized();
    return out;
  }
  Eigen::Index m = 0;
  double cum = 0.0;
  while (m < lambda.size()) {
    cum += lambda[m++];
    if (cum >= fraction * total * (1.0 - 1e-12)) break;
  }
  out.principal_dims = m;
  out.basis = directions.leftCols(m);
  return out;
}

double regularize_if_singular(Eigen::MatrixXd& s, FitDiagnostics* diag, const char* what) {
  const Eigen::Index m = s.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const double max_ev = es.eigenvalues().maxCoeff();
  const double min_ev = es.eigenvalues().minCoeff();
  if (max_ev > 0.0 && min_ev > 1e-12 * max_ev) return 0.0;
  const double trace = s.trace();
  const double eps = trace > 0.0 ? 1e-6 * trace / static_cast<double>(m) : 1e-12;
  s.diagonal().array() += eps;
  if (diag) {
    diag->regularized = true;
    diag->warnings.push_back(std::string(what) + " covariance is singular; added ridge " +
                             std::to_string(eps));
  }
  return eps;
}

Eigen::MatrixXd scatter(const Eigen::MatrixXd& rows, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd c = rows.rowwise() - mean.transpose();
  return c.transpose() * c;
}

Eigen::RowVectorXd lda_direction(const ClassStats& idle, const ClassStats& walk,
                                 FitDiagnostics* diag) {
  const Eigen::Index m = idle.rows.cols();
  const double dof = static_cast<double>(idle.rows.rows() + walk.rows.rows()) - 2.0;
  Eigen::MatrixXd sw = (scatter(idle.rows, idle.mean) + scatter(walk.rows, walk.mean)) / std::max(dof, 1.0);
  regularize_if_singular(sw, diag, "within-class");
  const Eigen::VectorXd delta = walk.mean - idle.mean;
  if (delta.norm() == 0.0) {
    if (diag) diag->warnings.push_back("class means coincide; discriminant defaults to first axis");
    return Eigen::RowVectorXd::Unit(m, 0);
  }
  Eigen::VectorXd t = sw.ldlt().solve(delta);
  if (!t.allFinite() || t.norm() == 0.0) t = delta;
  return t.normalized().transpose();
}

struct AidaTerms {
  Eigen::MatrixXd total;
  std::array<Eigen::MatrixXd, 2> within;
  std::array<double, 2> priors{0.5, 0.5};
};

AidaTerms aida_terms(const ClassStats& idle, const ClassStats& walk, FitDiagnostics* diag) {
  AidaTerms terms;
  const auto ni = static_cast<double>(idle.rows.rows());
  const auto nw = static_cast<double>(walk.rows.rows());
  const double n = ni + nw;
  terms.priors = {ni / n, nw / n};
  Eigen::MatrixXd all(idle.rows.rows() + walk.rows.rows(), idle.rows.cols());
  all << idle.rows, walk.rows;
  const Eigen::VectorXd mu = all.colwise().mean().transpose();
  terms.total = scatter(all, mu) / std::max(n - 1.0, 1.0);
  terms.within[0] = scatter(idle.rows, idle.mean) / std::max(ni - 1.0, 1.0);
  terms.within[1] = scatter(walk.rows, walk.mean) / std::max(nw - 1.0, 1.0);
  regularize_if_singular(terms.total, diag, "total");
  regularize_if_singular(terms.within[0], diag, "idle-class");
  regularize_if_singular(terms.within[1], diag, "walk-class");
  return terms;
}

double aida_value(const AidaTerms& t, const Eigen::VectorXd& w) {
  double j = std::log(w.dot(t.total * w));
  for (std::size_t c = 0; c < 2; ++c) j -= t.priors[c] * std::log(w.dot(t.within[c] * w));
  return j;
}

Eigen::VectorXd aida_gradient(const AidaTerms& t, const Eigen::VectorXd& w) {
  Eigen::VectorXd g = 2.0 * (t.total * w) / w.dot(t.total * w);
  for (std::size_t c = 0; c < 2; ++c)
    g -= 2.0 * t.priors[c] * (t.within[c] * w) / w.dot(t.within[c] * w);
  return g;
}

Eigen::RowVectorXd aida_direction(const ClassStats& idle, const ClassStats& walk,
                                  FitDiagnostics* diag) {
  Eigen::VectorXd w = lda_direction(idle, walk, diag).transpose();
  const AidaTerms terms = aida_terms(idle, walk, diag);
  double value = aida_value(terms, w);
  double step = 0.1;
  int iter = 0;
  constexpr int kMaxIter = 500;
  for (; iter < kMaxIter; ++iter) {
    Eigen::VectorXd g = aida_gradient(terms, w);
    g -= g.dot(w) * w;  // tangent to the sphere
    if (g.norm() < 1e-9) break;
    bool improved = false;
    for (int tries = 0; tries < 40; ++tries) {
      const Eigen::VectorXd candidate = (w + step * g).normalized();
      const double v = aida_value(terms, candidate);
      if (std::isfinite(v) && v > value) {
        const double gain = v - value;
        w = candidate;
        value = v;
        step *= 1.5;
        improved = gain > 1e-12 * std::max(1.0, std::abs(value));
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  if (diag) diag->aida_iterations = iter;
  if ((walk.mean - idle.mean).dot(w) < 0.0) w = -w;
  return w.transpose();
}

std::array<ClassGaussian, 2> fit_feature_models(const Eigen::VectorXd& f,
                                                std::span<const BrainState> y) {
  std::array<ClassGaussian, 2> out;
  for (auto c : {BrainState::Idle, BrainState::Walk}) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) sum += f[static_cast<Eigen::Index>(i)], ++n;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) ss += (f[static_cast<Eigen::Index>(i)] - mean) * (f[static_cast<Eigen::Index>(i)] - mean);
    double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    const double floor = 1e-12 * (1.0 + mean * mean);
    out[index_of(c)] = {mean, std::max(var, floor)};
  }
  return out;
}

double squared_residual(const SubspaceModel& s, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd centered = x - s.class_mean;
  const Eigen::VectorXd coords = s.basis.transpose() * centered;
  return (centered - s.basis * coords).squaredNorm();
}

}  // namespace

std::array<CpcaBasis, 2> fit_cpca(const Dataset& data, const CpcaConfig& cfg) {
  if (!(cfg.variance_fraction > 0.0 && cfg.variance_fraction <= 1.0))
    throw InvalidInput("variance fraction must lie in (0, 1]");
  require_both_classes(data.y, 2, "classwise PCA");
  const auto idle = class_rows(data.x, data.y, BrainState::Idle);
  const auto walk = class_rows(data.x, data.y, BrainState::Walk);
  const Eigen::VectorXd between = walk.mean - idle.mean;

  std::array<CpcaBasis, 2> out;
  for (auto c : {BrainState::Idle, BrainState::Walk}) {
    CpcaBasis b = principal_basis(c == BrainState::Idle ? idle : walk, cfg.variance_fraction);
    if (cfg.include_between_class && !b.rank_deficient && between.norm() > 0.0) {
      const Eigen::VectorXd residual = between - b.basis * (b.basis.transpose() * between);
      if (residual.norm() > 1e-8 * between.norm() && b.basis.cols() < b.basis.rows()) {
        b.basis.conservativeResize(Eigen::NoChange, b.basis.cols() + 1);
        b.basis.col(b.basis.cols() - 1) = residual.normalized();
      }
    }
    b.basis = orthonormalize(b.basis);
    out[index_of(c)] = std::move(b);
  }
  return out;
}

Eigen::RowVectorXd fit_discriminant(const Eigen::MatrixXd& projected,
                                    std::span<const BrainState> labels, DiscriminantMethod method,
                                    FitDiagnostics* diagnostics) {
  if (static_cast<std::size_t>(projected.rows()) != labels.size())
    throw InvalidInput("projected rows and labels differ in length");
  require_both_classes(labels, 1, "discriminant fitting");
  const auto idle = class_rows(projected, labels, BrainState::Idle);
  const auto walk = class_rows(projected, labels, BrainState::Walk);
  return method == DiscriminantMethod::Lda ? lda_direction(idle, walk, diagnostics)
                                           : aida_direction(idle, walk, diagnostics);
}

double aida_objective(const Eigen::MatrixXd& projected, std::span<const BrainState> labels,
                      const Eigen::RowVectorXd& w) {
  const auto idle = class_rows(projected, labels, BrainState::Idle);
  const auto walk = class_rows(projected, labels, BrainState::Walk);
  return aida_value(aida_terms(idle, walk, nullptr), w.transpose().normalized());
}

Classifier fit_classifier(const Dataset& data, const DecoderConfig& cfg, FitDiagnostics* diagnostics) {
  const auto bases = fit_cpca(data, cfg.cpca);
  Classifier clf;
  clf.method = cfg.method;
  clf.combination = cfg.combination;
  const auto counts = data.class_counts();
  const double n = static_cast<double>(data.size());
  clf.priors = {static_cast<double>(counts[0]) / n, static_cast<double>(counts[1]) / n};

  for (auto k : {BrainState::Idle, BrainState::Walk}) {
    auto& sub = clf.subspaces[index_of(k)];
    const auto& b = bases[index_of(k)];
    sub.basis = b.basis;
    sub.principal_dims = b.principal_dims;
    sub.rank_deficient = b.rank_deficient;
    if (diagnostics && b.rank_deficient)
      diagnostics->warnings.push_back(std::string(to_string(k)) +
                                      "-class trials have no variance; CPCA basis reduced to 1 dimension");
    const Eigen::MatrixXd projected = data.x * sub.basis;
    sub.discriminant = fit_discriminant(projected, data.y, cfg.method, diagnostics);
    const Eigen::VectorXd feature = projected * sub.discriminant.transpose();
    sub.feature_models = fit_feature_models(feature, data.y);

    const auto own = class_rows(data.x, data.y, k);
    sub.class_mean = own.mean;
    double total = 0.0;
    for (Eigen::Index i = 0; i < own.rows.rows(); ++i) total += squared_residual(sub, own.rows.row(i).transpose());
    sub.mean_residual = total / static_cast<double>(std::max<Eigen::Index>(own.rows.rows(), 1));
  }
  return clf;
}

double posterior_walk(double f, const std::array<ClassGaussian, 2>& models,
                      const std::array<double, 2>& priors) {
  std::array<double, 2> log_joint{};
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& g = models[c];
    const double z = f - g.mean;
    log_joint[c] = std::log(priors[c]) - 0.5 * std::log(g.variance) - 0.5 * z * z / g.variance;
  }
  // P(W) = 1 / (1 + exp(log_idle - log_walk))
  const double diff = log_joint[0] - log_joint[1];
  if (diff > 0.0) {
    const double e = std::exp(-diff);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(diff));
}

namespace {

double combine(const Classifier& clf, const std::array<double, 2>& walk, BrainState nearest) {
  if (clf.combination == SubspaceCombination::MinReconstruction) return walk[index_of(nearest)];
  const double w_idle = 1.0 - walk[0];  // idle subspace vouching for idle
  const double w_walk = walk[1];        // walk subspace vouching for walk
  const double denom = w_idle + w_walk;
  if (!(denom > 1e-300)) return 0.5 * (walk[0] + walk[1]);
  return (w_idle * walk[0] + w_walk * walk[1]) / denom;
}

}  // namespace

FeatureValue extract_feature(const Eigen::Ref<const Eigen::VectorXd>& vec_d, const Classifier& clf) {
  if (vec_d.size() != clf.input_dim())
    throw InvalidInput("feature input has dimension " + std::to_string(vec_d.size()) +
                       ", model expects " + std::to_string(clf.input_dim()));
  FeatureValue fv;
  std::array<double, 2> relative_residual{};
  for (auto k : {BrainState::Idle, BrainState::Walk}) {
    const auto& sub = clf.subspaces[index_of(k)];
    const double f = (sub.discriminant * (sub.basis.transpose() * vec_d))(0);
    fv.candidates[index_of(k)] = f;
    fv.subspace_walk[index_of(k)] = posterior_walk(f, sub.feature_models, clf.priors);
    relative_residual[index_of(k)] =
        squared_residual(sub, vec_d) / std::max(sub.mean_residual, std::numeric_limits<double>::min());
  }
  fv.nearest_subspace = relative_residual[1] < relative_residual[0] ? BrainState::Walk : BrainState::Idle;
  fv.p_walk = combine(clf, fv.subspace_walk, fv.nearest_subspace);
  return fv;
}

double posterior(const FeatureValue& f, const Classifier& clf) {
  std::array<double, 2> walk{};
  for (std::size_t k = 0; k < 2; ++k)
    walk[k] = posterior_walk(f.candidates[k], clf.subspaces[k].feature_models, clf.priors);
  return combine(clf, walk, f.nearest_subspace);
}

CvResult cross_validate(const Dataset& data, const DecoderConfig& cfg, const CvConfig& cv,
                        const CvObserver& observer) {
  if (cv.folds < 2 || cv.runs < 1) throw InvalidInput("cross-validation needs >= 2 folds and >= 1 run");
  require_both_classes(data.y, static_cast<std::size_t>(cv.folds), "cross-validation");
  const auto n = static_cast<std::size_t>(data.size());

  // Stratified assignment: shuffle once, then deal each class round-robin.
  std::vector<std::vector<int>> fold_of(static_cast<std::size_t>(cv.runs), std::vector<int>(n));
  const Rng master(cv.seed);
  for (int r = 0; r < cv.runs; ++r) {
    Rng rng = master.child(static_cast<std::uint64_t>(r));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    std::array<int, 2> dealt{0, 0};
    for (auto i : perm) fold_of[static_cast<std::size_t>(r)][i] = dealt[index_of(data.y[i])]++ % cv.folds;
  }

  const auto tasks = static_cast<std::size_t>(cv.runs * cv.folds);
  std::vector<double> accuracies(tasks, 0.0);
  parallel_for(tasks, [&](std::size_t task) {
    const int r = static_cast<int>(task) / cv.folds;
    const int k = static_cast<int>(task) % cv.folds;
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(r)][i] == k ? test : train).push_back(i);
    const Dataset train_set = data.subset(train);
    const Classifier clf = fit_classifier(train_set, cfg);
    std::array<double, 2> hits{0, 0}, totals{0, 0};
    for (auto i : test) {
      const auto truth = data.y[i];
      const auto fv = extract_feature(data.x.row(static_cast<Eigen::Index>(i)).transpose(), clf);
      totals[index_of(truth)] += 1.0;
      if (fv.decision() == truth) hits[index_of(truth)] += 1.0;
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
      if (totals[c] > 0.0) acc += clf.priors[c] * hits[c] / totals[c];
    accuracies[task] = acc;
  });
  if (observer) {
    for (std::size_t task = 0; task < tasks; ++task) {
      const int r = static_cast<int>(task) / cv.folds;
      const int k = static_cast<int>(task) % cv.folds;
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < n; ++i)
        (fold_of[static_cast<std::size_t>(r)][i] == k ? test : train).push_back(i);
      observer(r, k, train, test);
    }
  }

  CvResult result;
  result.fold_accuracies = accuracies;
  const double t = static_cast<double>(tasks);
  result.mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / t;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - result.mean) * (a - result.mean);
  result.stddev = tasks > 1 ? std::sqrt(ss / (t - 1.0)) : 0.0;
  return result;
}

CvResult cross_validate(const TrialSet& trials, Band band, const DecoderConfig& cfg,
                        const CvConfig& cv, const CvObserver& observer) {
  return cross_validate(make_dataset(trials, band), cfg, cv, observer);
}

double chance_p_value(double accuracy, int n_trials) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw InvalidInput("accuracy must lie in [0, 1]");
  if (n_trials <= 0) throw InvalidInput("trial count must be positive");
  const int k = std::clamp(static_cast<int>(std::ceil(accuracy * n_trials - 1e-9)), 0, n_trials);
  const double n = n_trials;
  const double log_half_n = n * std::log(0.5);
  // log-sum-exp over the upper tail terms C(n, j) 2^-n
  std::vector<double> logs;
  for (int j = k; j <= n_trials; ++j)
    logs.push_back(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + log_half_n);
  const double peak = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - peak);
  return std::min(1.0, std::exp(peak) * sum);
}

BandSearchResult search_band(const TrialSet& trials, const DecoderConfig& cfg, const CvConfig& cv,
                             Band start) {
  start.validate();
  BandSearchResult out;
  auto evaluate = [&](Band b) {
    CvResult r = cross_validate(trials, b, cfg, cv);
    out.trace.push_back({b, r.mean});
    return r;
  };
  out.band = start;
  out.cv = evaluate(start);

  auto walk_edge = [&](bool raise_lower) {
    while (true) {
      Band candidate = out.band;
      (raise_lower ? candidate.lo_hz : candidate.hi_hz) += raise_lower ? 2 : -2;
      if (candidate.lo_hz >= candidate.hi_hz) {
        out.warnings.push_back(std::string("band search stopped: ") +
                               (raise_lower ? "raising the lower" : "lowering the upper") +
                               " edge would leave no bins; keeping [" + std::to_string(out.band.lo_hz) +
                               ", " + std::to_string(out.band.hi_hz) + ") Hz");
        return;
      }
      CvResult r = evaluate(candidate);
      if (!(r.mean > out.cv.mean)) return;
      out.band = candidate;
      out.cv = std::move(r);
    }
  };
  walk_edge(true);
  walk_edge(false);
  return out;
}

TrainingReport train_model(const EegRecording& rec, const TrainingConfig& cfg) {
  rec.validate();
  if (!rec.labels) throw InvalidInput("training needs a labeled recording");
  if (cfg.methods.empty()) throw InvalidInput("at least one discriminant method is required");

  const EegRecording referenced = common_average_reference(rec);
  const EegRecording filtered =
      bandpass(referenced, cfg.bandpass.lo_hz, cfg.bandpass.hi_hz, cfg.bandpass.order);
  auto [clean, mask] = reject_artifact_channels(filtered, cfg.artifacts);
  TrialSet trials = extract_trials(clean, cfg.seed, cfg.trials);
  if (cfg.shuffle_labels_seed) {
    std::vector<BrainState> labels;
    for (const auto& t : trials.trials) labels.push_back(t.label);
    Rng rng(*cfg.shuffle_labels_seed);
    rng.shuffle(std::span<BrainState>(labels));
    for (std::size_t i = 0; i < labels.size(); ++i) trials.trials[i].label = labels[i];
  }

  TrainingReport report;
  const CvConfig cv{cfg.cv_runs, cfg.cv_folds, splitmix64(cfg.seed)};
  std::size_t best = 0;
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    DecoderConfig dc{cfg.cpca, cfg.methods[i], cfg.combination};
    Band start{static_cast<int>(cfg.trials.f_min_hz), static_cast<int>(cfg.trials.f_max_hz)};
    report.outcomes.push_back({cfg.methods[i], search_band(trials, dc, cv, start)});
    for (const auto& w : report.outcomes.back().search.warnings) report.warnings.push_back(w);
    if (report.outcomes[i].search.cv.mean > report.outcomes[best].search.cv.mean) best = i;
  }
  const auto& chosen = report.outcomes[best];

  DecodingModel& model = report.model;
  model.sample_rate_hz = rec.sample_rate_hz;
  model.channel_names = rec.channel_names;
  model.bandpass = cfg.bandpass;
  model.channel_mask = mask;
  model.band = chosen.search.band;
  FitDiagnostics diag;
  model.classifier = fit_classifier(make_dataset(trials, model.band),
                                    {cfg.cpca, chosen.method, cfg.combination}, &diag);
  for (auto& w : diag.warnings) report.warnings.push_back(std::move(w));
  model.cv_accuracy_mean = chosen.search.cv.mean;
  model.cv_accuracy_std = chosen.search.cv.stddev;
  model.p_value = chance_p_value(model.cv_accuracy_mean, static_cast<int>(trials.size()));
  model.seed = cfg.seed;
  model.trial_counts = trials.class_counts();
  return report;
}

Eigen::MatrixXd weight_map(const DecodingModel& model, BrainState subspace) {
  const auto& sub = model.classifier.subspaces[index_of(subspace)];
  const Eigen::VectorXd w = (sub.discriminant * sub.basis.transpose()).transpose().cwiseAbs();
  const auto bins = model.band.n_bins();
  const auto channels = static_cast<Eigen::Index>(model.channel_mask.retained.size());
  if (w.size() != bins * channels) throw InvalidInput("model dimensions are inconsistent");
  return w.reshaped(bins, channels);
}

}  // namespace bciwalk

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bciwalk/recording.hpp"
#include "bciwalk/signal.hpp"
#include "bciwalk/spectral.hpp"
#include "bciwalk/types.hpp"

namespace bciwalk {

enum class DiscriminantMethod : std::uint8_t { Lda, Aida };

/// How the two class subspaces are merged into one posterior.
enum class SubspaceCombination : std::uint8_t {
  /// Each subspace votes with weight equal to the posterior of its own class
  /// computed inside it; the result is the weighted mean of the subspace
  /// posteriors.
  Weighted,
  /// Use only the subspace that reconstructs the trial best, relative to
  /// that class's mean training residual.
  MinReconstruction,
};

std::string_view to_string(DiscriminantMethod m);
std::string_view to_string(SubspaceCombination c);
DiscriminantMethod parse_discriminant_method(std::string_view s);
SubspaceCombination parse_subspace_combination(std::string_view s);

/// Contiguous analysis band in whole 2-Hz bins, [lo_hz, hi_hz).
struct Band {
  int lo_hz = 0;
  int hi_hz = 40;

  int n_bins() const { return (hi_hz - lo_hz) / 2; }
  /// Row of the first band bin inside a 0-based full-range bin matrix.
  int first_bin() const { return lo_hz / 2; }
  void validate() const;

  friend bool operator==(const Band&, const Band&) = default;
};

/// vec() of the band rows of a full-range [B x C] bin matrix, channel-major
/// (all bins of channel 0, then channel 1, ...).
Eigen::VectorXd vectorize(const Eigen::MatrixXd& full_bins, Band band);

/// Design matrix: one row per trial.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<BrainState> y;

  Eigen::Index size() const { return x.rows(); }
  std::array<std::size_t, 2> class_counts() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

Dataset make_dataset(const TrialSet& trials, Band band);

struct CpcaConfig {
  double variance_fraction = 0.9;
  /// Append the between-class mean direction to each class subspace when it
  /// is not already spanned.
  bool include_between_class = true;
};

struct CpcaBasis {
  Eigen::MatrixXd basis;  // [D x m], orthonormal columns
  Eigen::Index principal_dims = 0;
  bool rank_deficient = false;
};

/// Classwise PCA: for each class, the smallest principal subspace of that
/// class's centered trials holding at least `variance_fraction` of its
/// variance. Indexed by BrainState. A class with zero variance gets a
/// one-dimensional basis along its mean and `rank_deficient` set.
std::array<CpcaBasis, 2> fit_cpca(const Dataset& data, const CpcaConfig& cfg = {});

struct FitDiagnostics {
  bool regularized = false;
  int aida_iterations = 0;
  std::vector<std::string> warnings;
};

/// One-dimensional discriminant on already projected rows.
///
/// LDA returns S_w^{-1}(mu_walk - mu_idle) with S_w the pooled within-class
/// covariance. AIDA maximizes the Gaussian class-feature information
///   J(w) = log(w' S_t w) - sum_c prior_c * log(w' S_c w)
/// by projected gradient ascent on the unit sphere from the LDA direction.
/// Either way the result has unit norm and is oriented so walk trials score
/// higher. Singular covariances get a ridge of 1e-6 * trace / m.
Eigen::RowVectorXd fit_discriminant(const Eigen::MatrixXd& projected,
                                    std::span<const BrainState> labels, DiscriminantMethod method,
                                    FitDiagnostics* diagnostics = nullptr);

/// Value of the AIDA criterion for direction w (exposed for tests).
double aida_objective(const Eigen::MatrixXd& projected, std::span<const BrainState> labels,
                      const Eigen::RowVectorXd& w);

struct ClassGaussian {
  double mean = 0.0;
  double variance = 1.0;

  friend bool operator==(const ClassGaussian&, const ClassGaussian&) = default;
};

/// Everything fitted inside one class subspace.
struct SubspaceModel {
  Eigen::MatrixXd basis;               // [D x m]
  Eigen::RowVectorXd discriminant;     // [1 x m]
  std::array<ClassGaussian, 2> feature_models;  // by BrainState
  Eigen::VectorXd class_mean;          // [D], centre for reconstruction error
  double mean_residual = 1.0;          // mean squared training residual
  Eigen::Index principal_dims = 0;
  bool rank_deficient = false;
};

struct Classifier {
  std::array<SubspaceModel, 2> subspaces;  // by BrainState of the CPCA class
  std::array<double, 2> priors{0.5, 0.5};
  DiscriminantMethod method = DiscriminantMethod::Lda;
  SubspaceCombination combination = SubspaceCombination::Weighted;

  Eigen::Index input_dim() const { return subspaces[0].basis.rows(); }
};

struct DecoderConfig {
  CpcaConfig cpca;
  DiscriminantMethod method = DiscriminantMethod::Lda;
  SubspaceCombination combination = SubspaceCombination::Weighted;
};

Classifier fit_classifier(const Dataset& data, const DecoderConfig& cfg,
                          FitDiagnostics* diagnostics = nullptr);

/// Bayes posterior of walk for a scalar feature under two 1D Gaussians.
double posterior_walk(double f, const std::array<ClassGaussian, 2>& models,
                      const std::array<double, 2>& priors);

struct FeatureValue {
  /// f_k = T_k * basis_k' * vec(d), one per class subspace.
  std::array<double, 2> candidates{0.0, 0.0};
  /// P(W | f_k) inside each subspace.
  std::array<double, 2> subspace_walk{0.5, 0.5};
  /// Subspace picked by the reconstruction-error rule.
  BrainState nearest_subspace = BrainState::Idle;
  /// Combined P(W | f*).
  double p_walk = 0.5;

  double p_idle() const { return 1.0 - p_walk; }
  /// Idle iff P(I|f*) > P(W|f*).
  BrainState decision() const { return p_idle() > p_walk ? BrainState::Idle : BrainState::Walk; }
};

/// Throws InvalidInput if vec_d does not match the classifier's input size.
FeatureValue extract_feature(const Eigen::Ref<const Eigen::VectorXd>& vec_d, const Classifier& clf);

/// Combined P(W | f*) from the per-subspace candidates.
double posterior(const FeatureValue& f, const Classifier& clf);

struct CvConfig {
  int runs = 10;
  int folds = 10;
  std::uint64_t seed = 1;
};

struct CvResult {
  double mean = 0.0;
  /// Standard deviation over all runs x folds fold accuracies.
  double stddev = 0.0;
  std::vector<double> fold_accuracies;
};

/// Called once per (run, fold) with the row indices used for fitting and
/// for testing.
using CvObserver = std::function<void(int run, int fold, std::span<const std::size_t> train,
                                      std::span<const std::size_t> test)>;

/// Repeated stratified k-fold cross-validation. Fold accuracy is
/// P(I|f*in I) P(I) + P(W|f*in W) P(W): per-class hit rates weighted by the
/// training priors. Every fit happens on the training rows only.
CvResult cross_validate(const Dataset& data, const DecoderConfig& cfg, const CvConfig& cv,
                        const CvObserver& observer = {});
CvResult cross_validate(const TrialSet& trials, Band band, const DecoderConfig& cfg,
                        const CvConfig& cv, const CvObserver& observer = {});

/// One-tailed exact binomial P(X >= ceil(accuracy * n)) for X ~ Bin(n, 1/2).
double chance_p_value(double accuracy, int n_trials = 100);

struct BandSearchStep {
  Band band;
  double accuracy = 0.0;
};

struct BandSearchResult {
  Band band;
  CvResult cv;
  std::vector<BandSearchStep> trace;
  std::vector<std::string> warnings;
};

/// Greedy contiguous band search: from the full range, raise the lower edge
/// in 2-Hz steps while CV accuracy strictly improves, then lower the upper
/// edge the same way. Ties keep the wider band.
BandSearchResult search_band(const TrialSet& trials, const DecoderConfig& cfg, const CvConfig& cv,
                             Band start = {});

/// Frozen result of training; everything the online loop needs.
struct DecodingModel {
  double sample_rate_hz = 256.0;
  std::vector<std::string> channel_names;  // raw montage the model expects
  BandpassConfig bandpass;
  ChannelMask channel_mask;
  Band band;
  Classifier classifier;
  double cv_accuracy_mean = 0.0;
  double cv_accuracy_std = 0.0;
  double p_value = 1.0;
  std::uint64_t seed = 0;
  std::array<std::size_t, 2> trial_counts{0, 0};

  DiscriminantMethod method() const { return classifier.method; }
};

struct TrainingConfig {
  BandpassConfig bandpass;
  ArtifactRejectionConfig artifacts;
  TrialExtractionConfig trials;
  CpcaConfig cpca;
  SubspaceCombination combination = SubspaceCombination::Weighted;
  std::vector<DiscriminantMethod> methods{DiscriminantMethod::Lda, DiscriminantMethod::Aida};
  int cv_runs = 10;
  int cv_folds = 10;
  std::uint64_t seed = 1;
  /// When set, trial labels are permuted with this seed before the search.
  /// Destroys the label/data relationship; used for control runs.
  std::optional<std::uint64_t> shuffle_labels_seed;
};

struct MethodOutcome {
  DiscriminantMethod method = DiscriminantMethod::Lda;
  BandSearchResult search;
};

struct TrainingReport {
  DecodingModel model;
  std::vector<MethodOutcome> outcomes;
  std::vector<std::string> warnings;
};

/// Full offline pipeline: CAR, band-pass, artifact-channel rejection, trial
/// extraction, band search per discriminant method, method selection by CV
/// accuracy (earlier method wins ties), final fit on all trials.
TrainingReport train_model(const EegRecording& rec, const TrainingConfig& cfg = {});

/// Per-bin, per-channel salience |T_k basis_k'| of one subspace as [B x C].
Eigen::MatrixXd weight_map(const DecodingModel& model, BrainState subspace);

}  // namespace bciwalk

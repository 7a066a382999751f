#pragma once

#include "pathfair/common.hpp"
#include "pathfair/linear_model.hpp"
#include "pathfair/scorer.hpp"
#include "pathfair/sfm_data.hpp"
#include "pathfair/synthgen.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <optional>

namespace pathfair {

enum class TargetKind { data_outcome, model_hard_label, model_score };
enum class EstimatorKind { plugin, doubly_robust, direct_counterfactual };

std::string to_string(TargetKind k);
std::string to_string(EstimatorKind k);
TargetKind target_kind_from_string(const std::string& s);
EstimatorKind estimator_kind_from_string(const std::string& s);

enum class NuisanceLearner { logistic, mlp };

struct LearnerConfig {
  NuisanceLearner kind = NuisanceLearner::logistic;
  TrainConfig train{.learning_rate = 1e-2, .epochs = 300, .batch_size = 256, .seed = 0,
                    .patience = 10, .class_weighting = false, .tolerance = 1e-6};
  double l2 = 1e-3;
  MlpOptions mlp;
  int k_folds = 2;
  double clip = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
  static LearnerConfig from_json(const nlohmann::json& j);
};

/// Per-unit out-of-fold nuisance evaluations.
///   e    = P(X=1 | Z)
///   g    = P(X=1 | Z, W)
///   mu[a] = E[T | X=a, Z, W]
///   eta[b][a] = E[mu(a, Z, W) | X=b, Z]; eta[a][a] is fit as E[T | X=a, Z]
/// `weight` is 1 for sampled units; an enumerated population supplies cell
/// probabilities instead.
struct NuisanceSet {
  IndexList fold;
  int k_folds = 2;
  double clip = 0.01;
  Vector e, g;
  std::array<Vector, 2> mu;
  std::array<std::array<Vector, 2>, 2> eta;
  Vector weight;

  Index n() const { return e.size(); }
  nlohmann::json diagnostics(const Vector& x) const;
};

/// Fold labels in [0, k) from a seeded permutation; fold sizes differ by at most 1.
IndexList assign_folds(Index n, int k_folds, std::uint64_t seed);

/// Cross-fitted nuisances. Throws ErrorKind::estimation when a fold lacks an x group.
NuisanceSet fit_nuisances(const SfmDataset& d, const Vector& target, const LearnerConfig& config,
                          std::uint64_t seed);

/// Per-unit doubly robust pseudo-outcome for arm (a, b): X set to a, mediators
/// as under X = b. Throws ErrorKind::estimation naming the first non-finite unit.
Vector dr_pseudo_outcomes(const Vector& x, const Vector& target, const NuisanceSet& nu, int a,
                          int b);

/// Weighted mean of the pseudo-outcomes.
double counterfactual_mean_dr(const Vector& x, const Vector& target, const NuisanceSet& nu, int a,
                              int b);
double counterfactual_mean_plugin(const NuisanceSet& nu, int a, int b);

/// Arm means m(a, b) = E[T_{a, W_b}] and observational group means.
struct ArmMeans {
  double m00 = 0, m10 = 0, m11 = 0;
  double obs0 = 0, obs1 = 0;

  EffectTriple effects() const;
  nlohmann::json to_json() const;
};

/// Per-unit contributions whose weighted means give ArmMeans; bootstrap
/// replicates without refitting resample these.
struct UnitContributions {
  Vector c00, c10, c11;
  Vector target, x, weight;

  ArmMeans means(std::span<const Index> rows = {}) const;
};

UnitContributions dr_contributions(const Vector& x, const Vector& target, const NuisanceSet& nu);
UnitContributions plugin_contributions(const Vector& x, const Vector& target, const NuisanceSet& nu);

/// Scorer fed flipped X; for units outside the mediator-source group, W is drawn
/// from that group within the same decile stratum of an estimated P(X=1 | Z).
/// One draw per unit and group is shared by every arm.
UnitContributions direct_counterfactual_contributions(const SfmDataset& d, const TrainedScorer& s,
                                                      TargetKind target, std::uint64_t seed);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile intervals over B unit-level resamples of `statistic`, one per
/// component. Replicate r draws from stream (seed, r). More than 10% failed
/// replicates raise ErrorKind::bootstrap.
std::vector<Interval> bootstrap_intervals(
    Index n, const std::function<Vector(std::span<const Index>)>& statistic, int replicates,
    std::uint64_t seed, double level = 0.95);

Interval bootstrap_ci(Index n, const std::function<double(std::span<const Index>)>& statistic,
                      int replicates, std::uint64_t seed, double level = 0.95);

struct EstimateConfig {
  TargetKind target = TargetKind::data_outcome;
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  LearnerConfig learner;
  int bootstrap = 200;  // 0 skips intervals
  /// Refit nuisances inside each replicate; otherwise resample unit contributions.
  bool refit_in_bootstrap = true;
  double level = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EstimateConfig from_json(const nlohmann::json& j);
};

struct EffectReport {
  TargetKind target = TargetKind::data_outcome;
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  EffectTriple point;
  ArmMeans arms;
  std::optional<std::array<Interval, 4>> ci;  // te, nde, nie, se
  int bootstrap = 0;
  std::uint64_t seed = 0;
  nlohmann::json diagnostics = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Effects of the chosen target on `d`. Model targets require `scorer`.
EffectReport estimate_effects(const SfmDataset& d, const EstimateConfig& config,
                              const TrainedScorer* scorer = nullptr);

/// Target vector for `d`: Y, hard labels or scores.
Vector effect_target(const SfmDataset& d, TargetKind target, const TrainedScorer* scorer);

}  // namespace pathfair

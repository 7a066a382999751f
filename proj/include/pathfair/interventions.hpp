#pragma once

#include "pathfair/common.hpp"
#include "pathfair/effects.hpp"
#include "pathfair/linear_model.hpp"
#include "pathfair/scorer.hpp"
#include "pathfair/sfm_data.hpp"

#include <json.hpp>

#include <optional>

namespace pathfair {

enum class Strategy { inprocessing, fair_resampling, unaware, unbiased_fs, greedy_fs, lfr, eq_odds };
enum class EffectPath { nde, nie, se };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
std::string to_string(EffectPath p);
EffectPath effect_path_from_string(const std::string& s);
/// Parses "nde,nie" style lists.
std::vector<EffectPath> parse_effect_paths(const std::string& csv);

struct LfrConfig {
  Index prototypes = 10;
  double a_x = 1e-3;
  double a_y = 1.0;
  double a_z = 1.0;
  TrainConfig train{.learning_rate = 1e-2, .epochs = 200, .batch_size = 256, .seed = 0,
                    .patience = 20, .class_weighting = false, .tolerance = 1e-8};

  nlohmann::json to_json() const;
  static LfrConfig from_json(const nlohmann::json& j);
};

/// 0.1 to 100, `points` values evenly spaced in log10.
std::vector<double> log_lambda_grid(int points = 7, double lo = 0.1, double hi = 100.0);

struct InterventionConfig {
  Strategy strategy = Strategy::inprocessing;
  std::vector<EffectPath> targets{EffectPath::nde};
  std::vector<double> lambda_grid = log_lambda_grid();
  std::vector<Index> feature_counts;  // empty: 20%, 40%, 60%, 80% of |W|
  LfrConfig lfr;
  int draws = 50;                     // marginalization draws for fair resampling
  BaselineConfig base;
  double propensity_clip = 0.01;
  int greedy_alpha_points = 11;
  int pfi_repeats = 5;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static InterventionConfig from_json(const nlohmann::json& j);
};

struct Candidate {
  TrainedScorer scorer;
  /// Amount of intervention; the smaller value wins selection ties
  /// (lambda, or -n for feature counts).
  double intervention_level = 0.0;
  nlohmann::json parameters = nlohmann::json::object();
  double val_bce = 0.0;
  EffectTriple val_effects;
  double val_target_effect = 0.0;  // mean |targeted effect|
};

struct CandidateSet {
  Strategy strategy = Strategy::inprocessing;
  std::vector<EffectPath> targets;
  std::vector<Candidate> candidates;  // sorted by intervention level
  std::optional<std::size_t> selected;

  /// Summary without model parameters.
  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Differentiable penalty pieces

/// Sum_k coef_k * sigmoid(theta . [features_k, 1]) over fixed rows.
struct ScoreFunctional {
  Matrix features;
  Vector coef;

  double value(const Vector& theta, Vector* grad) const;
};

/// In-sample P(X=1 | Z) and P(X=1 | Z, W), clipped.
struct FrozenPropensities {
  Vector e, g;
  LinearModel e_model;
  double clip_rate = 0.0;
};

FrozenPropensities fit_frozen_propensities(const SfmDataset& d, const TrainConfig& train,
                                           double clip);

/// Effect proxy on the soft scores of a full-feature logistic scorer.
ScoreFunctional effect_proxy(EffectPath path, const SfmDataset& d, const FrozenPropensities& p);

/// Soft TPR and FPR gaps between the x groups.
std::array<ScoreFunctional, 2> eq_odds_gaps(const Matrix& features, const Vector& x, const Vector& y);

/// lambda * sum of squared functionals.
SmoothObjective squared_penalty(std::vector<ScoreFunctional> parts, double lambda);

// ---------------------------------------------------------------------------
// Strategies

CandidateSet train_inprocessing(const SfmDataset& train, const SfmDataset& val,
                                const InterventionConfig& config);
CandidateSet train_fair_resampling(const SfmDataset& train, const SfmDataset& val,
                                   const InterventionConfig& config);
CandidateSet train_unaware(const SfmDataset& train, const SfmDataset& val,
                           const InterventionConfig& config);
CandidateSet train_unbiased_fs(const SfmDataset& train, const SfmDataset& val,
                               const InterventionConfig& config);
CandidateSet train_greedy_fs(const SfmDataset& train, const SfmDataset& val,
                             const InterventionConfig& config);
CandidateSet train_lfr(const SfmDataset& train, const SfmDataset& val,
                       const InterventionConfig& config);
CandidateSet train_eq_odds(const SfmDataset& train, const SfmDataset& val,
                           const InterventionConfig& config);

CandidateSet train_intervention(const SfmDataset& train, const SfmDataset& val,
                                const InterventionConfig& config);

/// Fills validation BCE and direct-counterfactual effects on soft scores.
void evaluate_candidates(CandidateSet& set, const SfmDataset& val, std::uint64_t seed);

/// rank(BCE) + rank(mean |target effect|) with average ranks; ties go to the
/// smaller intervention level. Evaluates candidates first when needed.
const TrainedScorer& select_candidate(CandidateSet& set, const SfmDataset& val, std::uint64_t seed);

/// Rank-sum selection over precomputed values (index into the inputs).
std::size_t select_by_rank_sum(const std::vector<double>& bce, const std::vector<double>& effect,
                               const std::vector<double>& intervention_level);

// Greedy feature-selection pieces, exposed for testing.

/// Selected indices for score_j = (1 - alpha) I_j - alpha B_j, top n.
IndexList greedy_selection(const Vector& importance, const Vector& bias, double alpha, Index n);

struct GreedyCurve {
  std::vector<double> alphas;
  std::vector<double> mean_importance;
  std::vector<double> mean_bias;
  std::size_t elbow = 0;
};

/// Tradeoff curve over an even alpha grid and its elbow (maximum perpendicular
/// distance from the chord joining the endpoints; the grid midpoint when all
/// distances vanish).
GreedyCurve greedy_curve(const Vector& importance, const Vector& bias, Index n, int points);

/// Min-max normalization; +infinity maps to 1 and the remaining finite values
/// are scaled over their own range.
Vector minmax_normalize(const Vector& v);

// LFR pieces, exposed for gradient checks.

struct LfrBatchLoss {
  double total = 0.0;
  double parity = 0.0;
  double reconstruction = 0.0;
  double prediction = 0.0;
};

/// Loss of prototype parameters theta = [vec(P) (K x d, column-major); head]
/// on rows of (features, x, y).
LfrBatchLoss lfr_loss(const Vector& theta, Index k, const Matrix& features, const Vector& x,
                      const Vector& y, const LfrConfig& config, Vector* grad);

}  // namespace pathfair

#pragma once

#include "pathfair/common.hpp"
#include "pathfair/linear_model.hpp"
#include "pathfair/network.hpp"
#include "pathfair/sfm_data.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace pathfair {

/// Which of (X, Z, W) a scorer consumes. Feature order is always [x, z..., w...].
struct FeatureMask {
  bool x = true;
  std::vector<bool> z;
  std::vector<bool> w;

  static FeatureMask all(Index dim_z, Index dim_w);
  Index width() const;
  bool uses_all() const;
  nlohmann::json to_json() const;
  static FeatureMask from_json(const nlohmann::json& j);
};

/// Masked feature matrix built from explicit blocks.
Matrix feature_block(const FeatureMask& mask, const Vector& x, const Matrix& z, const Matrix& w);
Matrix feature_block(const FeatureMask& mask, const SfmDataset& d);

/// Prototype representation: soft assignment to K prototypes by softmax of
/// negative squared distance, each prototype carrying an outcome logit.
struct PrototypeModel {
  Matrix prototypes;  // K x d
  Vector head;        // K logits

  Index k() const { return prototypes.rows(); }
  Matrix assignments(const Matrix& features) const;
  Vector predict_proba(const Matrix& features) const;
  nlohmann::json to_json() const;
  static PrototypeModel from_json(const nlohmann::json& j);
};

enum class ScorerModelKind { linear, mlp, prototype };
enum class MarginalizationPolicy { none, marginalize_x };

/// Mediator draws used when the mediator path is averaged out: rows of W from
/// the x0 group, bucketed by strata of the propensity P(X=1 | Z).
struct MediatorPool {
  std::vector<double> edges;    // interior stratum cut points on the propensity
  std::vector<Matrix> strata;   // one pool per stratum

  std::size_t stratum_of(double propensity) const;
  nlohmann::json to_json() const;
  static MediatorPool from_json(const nlohmann::json& j);
};

/// Classifier produced by the baseline or an intervention. Hard label is
/// 1{score >= threshold}.
struct TrainedScorer {
  std::string tag = "baseline";
  ScorerModelKind kind = ScorerModelKind::linear;
  LinearModel linear;
  MlpModel mlp;
  PrototypeModel prototype;
  FeatureMask mask;
  double threshold = 0.5;

  MarginalizationPolicy policy = MarginalizationPolicy::none;
  int draws = 1;
  std::uint64_t draw_seed = 0;
  std::optional<LinearModel> x_propensity;   // P(X=1 | Z) for marginalization
  std::optional<MediatorPool> mediator_pool; // present when the mediator path is averaged

  std::optional<Standardization> reference;
  Index dim_z = 0;
  Index dim_w = 0;
  std::uint64_t seed = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static TrainedScorer from_json(const nlohmann::json& j);
  static TrainedScorer read_file(const std::filesystem::path& path);
  void write_file(const std::filesystem::path& path) const;
};

/// Underlying model output for explicit (x, z, w) rows, ignoring the
/// marginalization policy.
Vector model_output(const TrainedScorer& s, const Vector& x, const Matrix& z, const Matrix& w);

/// Scorer output for explicit rows in the scorer's feature space (already
/// standardized), honouring the marginalization policy.
Vector score_rows(const TrainedScorer& s, const Vector& x, const Matrix& z, const Matrix& w);

/// Dataset aligned to the scorer's standardization reference.
SfmDataset align(const TrainedScorer& s, const SfmDataset& d);

Vector score(const TrainedScorer& s, const SfmDataset& d);
/// Scores with X replaced by `x_value` for every row.
Vector score_with_x(const TrainedScorer& s, const SfmDataset& d, double x_value);
Vector harden(const TrainedScorer& s, const Vector& scores);
Vector harden(const TrainedScorer& s, const SfmDataset& d);

struct ThresholdChoice {
  double threshold;
  double youden_sum;  // sensitivity + specificity at the threshold
};

/// Maximizes sensitivity + specificity over the unique score values with rule
/// "positive iff score >= t"; ties go to the smallest t.
ThresholdChoice select_threshold(const Vector& scores, const Vector& labels);

struct BaselineConfig {
  TrainConfig train;
  double l2 = 1e-3;

  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

/// Logistic scorer on every feature, threshold picked on validation.
TrainedScorer train_baseline(const SfmDataset& train, const SfmDataset& val,
                             const BaselineConfig& config);

/// Shared tail for every trained scorer: records schema metadata and the
/// standardization reference of `train`, then picks the threshold on `val`.
TrainedScorer finish_scorer(TrainedScorer s, const SfmDataset& train, const SfmDataset& val);

}  // namespace pathfair

#pragma once

#include "pathfair/common.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pathfair {

/// Shared optimizer settings for every trainable model.
struct TrainConfig {
  double learning_rate = 1e-2;  // networks (Adam)
  int epochs = 2000;            // iterations for full-batch solvers, epochs for networks
  Index batch_size = 256;
  std::uint64_t seed = 0;
  int patience = 20;            // early stopping on validation loss; 0 disables
  bool class_weighting = false;
  double tolerance = 1e-8;      // gradient-mapping tolerance for full-batch solvers

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Smooth part of an objective over a parameter vector. Writes the gradient
/// when `grad` is non-null and returns the value.
using SmoothObjective = std::function<double(const Vector& theta, Vector* grad)>;

struct ProximalOptions {
  double l1 = 0.0;
  Index n_penalized = 0;  // the leading coordinates receive the l1 term
  int max_iter = 2000;
  double tolerance = 1e-8;
};

struct ProximalResult {
  Vector theta;
  std::vector<double> history;  // full objective per iteration, non-increasing
  int iterations = 0;
  bool converged = false;
};

/// Monotone accelerated proximal gradient with backtracking line search and
/// function-value restart. Soft-thresholding gives exact zeros under l1.
ProximalResult minimize_proximal(const SmoothObjective& f, Vector theta0,
                                 const ProximalOptions& opts);

/// sigmoid(w.v + b) classifier.
struct LinearModel {
  Vector weights;
  double bias = 0.0;
  double l1_penalty = 0.0;
  double l2_penalty = 0.0;
  std::vector<std::string> feature_names;
  std::string reference_hash;     // standardization the model was fit under
  std::vector<double> loss_history;

  Index width() const { return weights.size(); }
  /// Clipped to [kProbClip, 1 - kProbClip].
  Vector predict_proba(const Matrix& features) const;
  Vector decision(const Matrix& features) const;

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
};

/// Mean weighted binary cross-entropy plus (l2/2)|w|^2 over theta = [w; b].
/// Labels may be soft (in [0, 1]).
SmoothObjective logistic_objective(const Matrix& features, const Vector& labels,
                                   const Vector& sample_weights, double l2);

/// Minimizes mean BCE + l1 |w|_1 + (l2/2) |w|^2. Labels in [0, 1]; at least two
/// distinct label values are required (ErrorKind::degenerate_fit otherwise).
/// `sample_weights` defaults to uniform (or class-balanced when configured).
LinearModel fit_logistic(const Matrix& features, const Vector& labels, const TrainConfig& config,
                         double l1, double l2, const Vector* sample_weights = nullptr);

/// Like fit_logistic but with an extra smooth penalty on theta = [w; b].
/// The penalty is skipped entirely when `penalty` is empty.
LinearModel fit_logistic_penalized(const Matrix& features, const Vector& labels,
                                   const TrainConfig& config, double l1, double l2,
                                   const SmoothObjective& penalty,
                                   const Vector* sample_weights = nullptr);

}  // namespace pathfair

#pragma once

#include "pathfair/common.hpp"

#include <functional>
#include <optional>

namespace pathfair {

/// Maps a feature matrix to probabilities.
using Predictor = std::function<Vector(const Matrix&)>;

enum class ImportanceMetric { auroc, neg_bce };

/// importance_j = metric(baseline) - mean over repeats of metric with column j
/// permuted, one entry per requested column (default: all, in order). Deterministic in `seed`; column j, repeat r
/// uses stream (seed, j, r).
Vector permutation_importance(const Predictor& model, const Matrix& features, const Vector& labels,
                              ImportanceMetric metric, int repeats, std::uint64_t seed,
                              std::span<const Index> columns = {});

/// Standardized mean difference per column, (mean_1 - mean_0) / sqrt((var_0 + var_1) / 2)
/// with population variances. A vanishing denominator gives 0 when the means
/// agree and +infinity otherwise.
Vector smd(const Matrix& w, const Vector& x);

/// Mean binary cross-entropy with predictions clipped to [kProbClip, 1 - kProbClip].
double bce(const Vector& probs, const Vector& labels);

}  // namespace pathfair

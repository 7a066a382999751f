#pragma once

#include "pathfair/common.hpp"

#include <optional>

namespace pathfair {

/// Mann-Whitney AUROC, ties counted one half. Throws ErrorKind::data when only
/// one class is present.
double auroc(const Vector& scores, const Vector& labels);

/// Mean squared (score - label).
double brier(const Vector& scores, const Vector& labels);

/// Product-moment correlation; empty when either vector has zero variance.
std::optional<double> pearson(const Vector& a, const Vector& b);

}  // namespace pathfair

#include "pathfair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pathfair {

double auroc(const Vector& scores, const Vector& labels) {
  const Index n = scores.size();
  if (labels.size() != n) throw Error(ErrorKind::data, "auroc: length mismatch");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) < scores(b); });

  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  double pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores(order[j]) == scores(order[i])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels(order[k]) == 1.0) {
        rank_sum += midrank;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw Error(ErrorKind::data, "auroc: only one class present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double brier(const Vector& scores, const Vector& labels) {
  if (scores.size() != labels.size() || scores.size() == 0)
    throw Error(ErrorKind::data, "brier: length mismatch or empty input");
  return (scores - labels).squaredNorm() / static_cast<double>(scores.size());
}

std::optional<double> pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const double ma = a.mean(), mb = b.mean();
  const Vector da = a.array() - ma;
  const Vector db = b.array() - mb;
  const double va = da.squaredNorm(), vb = db.squaredNorm();
  if (va <= 0.0 || vb <= 0.0) return std::nullopt;
  return clip(da.dot(db) / std::sqrt(va * vb), -1.0, 1.0);
}

}  // namespace pathfair

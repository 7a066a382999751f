#include "pathfair/importance.hpp"

#include "pathfair/metrics.hpp"

#include <cmath>
#include <limits>

namespace pathfair {

double bce(const Vector& probs, const Vector& labels) {
  double total = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    const double p = clip(probs(i), kProbClip, 1.0 - kProbClip);
    total -= labels(i) * std::log(p) + (1.0 - labels(i)) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

namespace {

double evaluate(ImportanceMetric metric, const Vector& probs, const Vector& labels) {
  return metric == ImportanceMetric::auroc ? auroc(probs, labels) : -bce(probs, labels);
}

}  // namespace

Vector permutation_importance(const Predictor& model, const Matrix& features, const Vector& labels,
                              ImportanceMetric metric, int repeats, std::uint64_t seed,
                              std::span<const Index> columns) {
  if (repeats < 1) throw Error(ErrorKind::config, "permutation importance needs repeats >= 1");
  IndexList cols(columns.begin(), columns.end());
  if (cols.empty())
    for (Index j = 0; j < features.cols(); ++j) cols.push_back(j);
  const double baseline = evaluate(metric, model(features), labels);

  Vector out(static_cast<Index>(cols.size()));
  parallel_for(cols.size(), [&](std::size_t k) {
    const Index j = cols[k];
    Matrix work = features;
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      IndexList perm(static_cast<std::size_t>(features.rows()));
      for (Index i = 0; i < features.rows(); ++i) perm[static_cast<std::size_t>(i)] = i;
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(r));
      shuffle(perm, rng);
      for (Index i = 0; i < features.rows(); ++i)
        work(i, j) = features(perm[static_cast<std::size_t>(i)], j);
      total += evaluate(metric, model(work), labels);
    }
    out(static_cast<Index>(k)) = baseline - total / repeats;
  });
  return out;
}

Vector smd(const Matrix& w, const Vector& x) {
  Index n1 = 0;
  for (Index i = 0; i < x.size(); ++i) n1 += x(i) == 1.0;
  const Index n0 = x.size() - n1;
  if (n0 == 0 || n1 == 0) throw Error(ErrorKind::data, "smd: an x group is empty");
  Vector out(w.cols());
  for (Index j = 0; j < w.cols(); ++j) {
    double s0 = 0, s1 = 0;
    for (Index i = 0; i < x.size(); ++i) (x(i) == 1.0 ? s1 : s0) += w(i, j);
    const double m0 = s0 / static_cast<double>(n0), m1 = s1 / static_cast<double>(n1);
    double v0 = 0, v1 = 0;
    for (Index i = 0; i < x.size(); ++i) {
      if (x(i) == 1.0)
        v1 += (w(i, j) - m1) * (w(i, j) - m1);
      else
        v0 += (w(i, j) - m0) * (w(i, j) - m0);
    }
    v0 /= static_cast<double>(n0);
    v1 /= static_cast<double>(n1);
    const double num = m1 - m0;
    const double den = std::sqrt(0.5 * (v0 + v1));
    if (den < 1e-12)
      out(j) = std::abs(num) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
    else
      out(j) = num / den;
  }
  return out;
}

}  // namespace pathfair

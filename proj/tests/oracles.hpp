#pragma once

#include "pathfair/effects.hpp"

#include <array>
#include <set>
#include <utility>

namespace testing {

using namespace pathfair;

/// Eight-cell population: X independent of Z (constant), P(X=1) = 0.5,
/// P(w=1 | x) = 0.25 + 0.5 x, P(y=1 | w) = 0.2 + 0.6 w. Rows carry their cell
/// probability as weight.
struct DiscreteOracle {
  Vector x, w, y, prob;

  static double p_w(int w, int x) {
    const double p1 = 0.25 + 0.5 * x;
    return w ? p1 : 1.0 - p1;
  }
  static double p_y1(int w) { return 0.2 + 0.6 * w; }

  DiscreteOracle() : x(8), w(8), y(8), prob(8) {
    Index r = 0;
    for (int xi = 0; xi < 2; ++xi)
      for (int wi = 0; wi < 2; ++wi)
        for (int yi = 0; yi < 2; ++yi, ++r) {
          x(r) = xi;
          w(r) = wi;
          y(r) = yi;
          prob(r) = 0.5 * p_w(wi, xi) * (yi ? p_y1(wi) : 1.0 - p_y1(wi));
        }
  }

  /// Brute-force arm mean E[Y_{a, W_b}] by enumeration; Y has no direct X input.
  static double arm(int /*a*/, int b) {
    double m = 0;
    for (int wi = 0; wi < 2; ++wi) m += p_w(wi, b) * p_y1(wi);
    return m;
  }

  static EffectTriple truth() {
    EffectTriple t;
    t.nde = arm(1, 0) - arm(0, 0);
    t.nie = arm(1, 1) - arm(1, 0);
    t.te = arm(1, 1) - arm(0, 0);
    const double obs1 = arm(1, 1), obs0 = arm(0, 0);  // X independent of Z
    t.se = (obs1 - arm(1, 1)) - (obs0 - arm(0, 0));
    return t;
  }

  /// Nuisances from the true tables; `bad_outcome` / `bad_propensity` swap the
  /// corresponding models for constants.
  NuisanceSet nuisances(bool bad_outcome = false, bool bad_propensity = false) const {
    NuisanceSet nu;
    nu.e = Vector::Constant(8, 0.5);
    nu.g.resize(8);
    for (int a = 0; a < 2; ++a) nu.mu[static_cast<std::size_t>(a)].resize(8);
    for (auto& row : nu.eta)
      for (auto& v : row) v.resize(8);
    for (Index i = 0; i < 8; ++i) {
      const int wi = static_cast<int>(w(i));
      nu.g(i) = p_w(wi, 1) / (p_w(wi, 0) + p_w(wi, 1));
      for (std::size_t a = 0; a < 2; ++a) nu.mu[a](i) = p_y1(wi);
      for (int b = 0; b < 2; ++b)
        for (std::size_t a = 0; a < 2; ++a) nu.eta[static_cast<std::size_t>(b)][a](i) = arm(static_cast<int>(a), b);
    }
    if (bad_outcome) {
      for (auto& m : nu.mu) m.setConstant(0.5);
      for (auto& row : nu.eta)
        for (auto& v : row) v.setConstant(0.1);
    }
    if (bad_propensity) {
      nu.e.setConstant(0.3);
      nu.g.setConstant(0.6);
    }
    nu.weight = prob;
    nu.fold = IndexList(8, 0);
    return nu;
  }
};

/// Brute-force Youden threshold: every unique score is tried, ties keep the smallest.
inline std::pair<double, double> youden_scan(const Vector& s, const Vector& y) {
  std::set<double> cands(s.data(), s.data() + s.size());
  const double pos = y.sum(), neg = static_cast<double>(y.size()) - pos;
  double best_t = 0, best = -1;
  for (double t : cands) {
    double tp = 0, tn = 0;
    for (Index i = 0; i < s.size(); ++i) {
      const bool hit = s(i) >= t;
      tp += hit && y(i) == 1.0;
      tn += !hit && y(i) == 0.0;
    }
    const double j = tp / pos + tn / neg;
    if (j > best) {
      best = j;
      best_t = t;
    }
  }
  return {best_t, best};
}

}  // namespace testing

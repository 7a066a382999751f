#include "pathfair/metrics.hpp"
#include "pathfair/scorer.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace pathfair;

namespace {

struct Partitions2 {
  SfmDataset train, val;
};

Partitions2 standardized(const SfmDataset& raw) {
  SplitSpec spec;
  spec.seed = 1;
  const Partitions p = split(raw, spec);
  return {standardize(p.train, p.train), standardize(p.val, p.train)};
}

SfmDataset planted_linear(std::uint64_t seed, Index n = 3000) {
  Rng rng = make_rng(seed);
  SfmDataset d;
  d.x.resize(n);
  d.y.resize(n);
  d.z = testing::random_matrix(n, 2, rng);
  d.w = testing::random_matrix(n, 3, rng);
  for (Index i = 0; i < n; ++i) {
    d.x(i) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const double t = 3.0 * d.w(i, 0) - 2.0 * d.z(i, 1) + d.x(i);
    d.y(i) = uniform01(rng) < sigmoid(3.0 * t) ? 1.0 : 0.0;
  }
  d.z_names = {"z1", "z2"};
  d.z_demographic = {true, false};
  d.w_names = {"w1", "w2", "w3"};
  return d;
}

}  // namespace

TEST_CASE("threshold examples") {
  Vector s(4), y(4);
  s << 0.2, 0.4, 0.6, 0.8;
  y << 0, 0, 1, 1;
  const ThresholdChoice c = select_threshold(s, y);
  CHECK(c.threshold == 0.6);
  CHECK(c.youden_sum == 2.0);
  const ThresholdChoice k = select_threshold(Vector::Constant(4, 0.5), y);
  CHECK(k.threshold == 0.5);
  CHECK(k.youden_sum == 1.0);
}

TEST_CASE("harden boundary") {
  TrainedScorer s;
  s.threshold = 0.5;
  Vector v(3);
  v << 0.49, 0.5, 0.51;
  const Vector h = harden(s, v);
  CHECK(h(0) == 0.0);
  CHECK(h(1) == 1.0);
  CHECK(h(2) == 1.0);
  CHECK(harden(s, v) == h);
}

TEST_CASE("baseline on a planted linear world") {
  const auto [train, val] = standardized(planted_linear(1));
  BaselineConfig cfg;
  cfg.train.seed = 3;
  const TrainedScorer a = train_baseline(train, val, cfg);
  CHECK(a.tag == "baseline");
  CHECK(auroc(score(a, val), val.y) > 0.9);
  const TrainedScorer b = train_baseline(train, val, cfg);
  CHECK(a.linear.weights == b.linear.weights);
  CHECK(a.threshold == b.threshold);
}

TEST_CASE("constant X trains with a warning") {
  SfmDataset raw = planted_linear(2);
  auto [train, val] = standardized(raw);
  train.x.setZero();
  const TrainedScorer s = train_baseline(train, val, BaselineConfig{});
  CHECK_FALSE(s.warnings.empty());
  CHECK(std::abs(s.linear.weights(0)) < 1e-3);
}

TEST_CASE("masking X makes scores invariant to flipping X") {
  const auto [train, val] = standardized(planted_linear(3));
  TrainedScorer s = train_baseline(train, val, BaselineConfig{});
  s.mask.x = false;
  s.linear.weights = s.linear.weights.tail(s.linear.weights.size() - 1).eval();
  CHECK(score_with_x(s, val, 0.0) == score_with_x(s, val, 1.0));
}

TEST_CASE("marginalize_x integrates X out") {
  const auto [train, val] = standardized(planted_linear(4));
  TrainedScorer s = train_baseline(train, val, BaselineConfig{});
  s.policy = MarginalizationPolicy::marginalize_x;
  s.draws = 50;
  s.draw_seed = 17;
  s.x_propensity = LinearModel{};
  s.x_propensity->weights = Vector::Zero(train.dim_z());
  s.x_propensity->bias = 0.2;
  const Vector a = score_with_x(s, val, 0.0), b = score_with_x(s, val, 1.0);
  CHECK(a == b);
  CHECK(score(s, val) == a);
  TrainedScorer one = s;
  one.draws = 1;
  CHECK(score(one, val) != a);
}

TEST_CASE("scorer JSON round trip and schema checks") {
  const auto [train, val] = standardized(planted_linear(5));
  const TrainedScorer s = train_baseline(train, val, BaselineConfig{});
  const TrainedScorer back = TrainedScorer::from_json(s.to_json());
  CHECK(score(back, val) == score(s, val));
  CHECK(back.threshold == s.threshold);
  CHECK(back.to_json() == s.to_json());

  // Raw rows are aligned through the stored reference.
  SfmDataset raw = unstandardize(val);
  const Vector via_raw = score(s, raw), direct = score(s, val);
  CHECK((via_raw - direct).cwiseAbs().maxCoeff() < 1e-12);

  SfmDataset narrow = val;
  narrow.w = val.w.leftCols(2);
  narrow.w_names.resize(2);
  try {
    score(s, narrow);
    FAIL("expected schema mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schema_mismatch);
  }
}

TEST_CASE("harden is monotone-invariant") {
  const auto [train, val] = standardized(planted_linear(6));
  const TrainedScorer s = train_baseline(train, val, BaselineConfig{});
  const Vector sc = score(s, val);
  TrainedScorer cubed = s;
  cubed.threshold = std::pow(s.threshold, 3);
  const Vector transformed = sc.array().cube();
  CHECK(harden(cubed, transformed) == harden(s, sc));
}

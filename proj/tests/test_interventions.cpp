#include "pathfair/interventions.hpp"
#include "pathfair/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>

using namespace pathfair;

namespace {

struct World {
  SfmDataset train, val;
};

World small_world(std::uint64_t seed, Index n = 1500, Index dim_z = 3, Index dim_w = 6) {
  const SfmDataset raw = testing::sample_dataset(testing::small_spec(seed, dim_z, dim_w), n);
  SplitSpec spec;
  spec.seed = seed;
  const Partitions p = split(raw, spec);
  return {standardize(p.train, p.train), standardize(p.val, p.train)};
}

InterventionConfig base_config(Strategy s) {
  InterventionConfig c;
  c.strategy = s;
  c.base.train.seed = 11;
  c.base.train.epochs = 60;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("effect proxy penalty gradients") {
  const World w = small_world(1, 600);
  TrainConfig tc;
  tc.seed = 2;
  const FrozenPropensities prop = fit_frozen_propensities(w.train, tc, 0.01);
  const Index p = 1 + w.train.dim_z() + w.train.dim_w();
  Rng rng = make_rng(9);
  for (auto path : {EffectPath::nde, EffectPath::nie, EffectPath::se}) {
    const SmoothObjective f = squared_penalty({effect_proxy(path, w.train, prop)}, 3.0);
    for (int t = 0; t < 20; ++t) {
      const Vector theta = testing::random_vector(p + 1, rng, 0.5);
      CHECK(testing::gradient_relative_error(f, theta) < 1e-5);
    }
  }
  const SmoothObjective all = squared_penalty({effect_proxy(EffectPath::nde, w.train, prop),
                                               effect_proxy(EffectPath::nie, w.train, prop)},
                                              0.7);
  for (int t = 0; t < 20; ++t) CHECK(testing::gradient_relative_error(all, testing::random_vector(p + 1, rng)) < 1e-5);
}

TEST_CASE("equalized odds penalty gradients") {
  const World w = small_world(2, 600);
  const Matrix f = feature_block(FeatureMask::all(w.train.dim_z(), w.train.dim_w()), w.train);
  const auto gaps = eq_odds_gaps(f, w.train.x, w.train.y);
  const SmoothObjective pen = squared_penalty({gaps[0], gaps[1]}, 2.0);
  Rng rng = make_rng(4);
  for (int t = 0; t < 20; ++t)
    CHECK(testing::gradient_relative_error(pen, testing::random_vector(f.cols() + 1, rng)) < 1e-5);
}

TEST_CASE("LFR loss gradients") {
  Rng rng = make_rng(6);
  const Index n = 40, d = 4, k = 3;
  const Matrix f = testing::random_matrix(n, d, rng);
  Vector x(n), y(n);
  for (Index i = 0; i < n; ++i) {
    x(i) = i % 2;
    y(i) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  }
  LfrConfig cfg;
  cfg.a_x = 0.3;
  cfg.a_z = 0.8;
  const SmoothObjective obj = [&](const Vector& theta, Vector* g) {
    return lfr_loss(theta, k, f, x, y, cfg, g).total;
  };
  for (int t = 0; t < 20; ++t)
    CHECK(testing::gradient_relative_error(obj, testing::random_vector(k * d + k, rng)) < 1e-5);
}

TEST_CASE("constant scorer has zero effect penalty") {
  const World w = small_world(3, 600);
  const FrozenPropensities prop = fit_frozen_propensities(w.train, TrainConfig{}, 0.01);
  Vector theta = Vector::Zero(1 + w.train.dim_z() + w.train.dim_w() + 1);
  theta(theta.size() - 1) = 0.8;
  for (auto path : {EffectPath::nde, EffectPath::nie, EffectPath::se})
    CHECK(std::abs(effect_proxy(path, w.train, prop).value(theta, nullptr)) < 1e-12);
}

TEST_CASE("equal groups have zero odds gaps") {
  Rng rng = make_rng(8);
  const Matrix half = testing::random_matrix(30, 3, rng);
  Matrix f(60, 3);
  f << half, half;
  Vector x(60), y(60);
  for (Index i = 0; i < 30; ++i) {
    y(i) = y(30 + i) = i % 3 == 0 ? 1.0 : 0.0;
    x(i) = 0.0;
    x(30 + i) = 1.0;
  }
  const auto gaps = eq_odds_gaps(f, x, y);
  const Vector theta = testing::random_vector(4, rng);
  CHECK(std::abs(gaps[0].value(theta, nullptr)) < 1e-12);
  CHECK(std::abs(gaps[1].value(theta, nullptr)) < 1e-12);
  x(0) = 1.0;
  x(30) = 0.0;
  y.setZero();
  CHECK_THROWS_AS(eq_odds_gaps(f, x, y), Error);
}

TEST_CASE("zero lambda reproduces the baseline") {
  const World w = small_world(4);
  for (auto s : {Strategy::inprocessing, Strategy::eq_odds}) {
    InterventionConfig cfg = base_config(s);
    cfg.lambda_grid = {0.0, 1.0};
    const CandidateSet set = train_intervention(w.train, w.val, cfg);
    const TrainedScorer base = train_baseline(w.train, w.val, cfg.base);
    REQUIRE(set.candidates.size() == 2);
    CHECK(set.candidates[0].intervention_level == 0.0);
    CHECK(set.candidates[0].scorer.linear.weights == base.linear.weights);
    CHECK(set.candidates[0].scorer.linear.bias == base.linear.bias);
    CHECK(set.candidates[1].scorer.linear.weights != base.linear.weights);
  }
}

TEST_CASE("feature selection keeping every mediator reproduces the baseline") {
  const World w = small_world(5);
  for (auto s : {Strategy::unbiased_fs, Strategy::greedy_fs}) {
    InterventionConfig cfg = base_config(s);
    cfg.feature_counts = {2, w.train.dim_w()};
    const CandidateSet set = train_intervention(w.train, w.val, cfg);
    const TrainedScorer base = train_baseline(w.train, w.val, cfg.base);
    REQUIRE(set.candidates.size() == 2);
    const Candidate& full = set.candidates[0];  // level -|W| sorts first
    CHECK(full.parameters.at("n_features") == w.train.dim_w());
    CHECK(full.scorer.linear.weights == base.linear.weights);
    CHECK(set.candidates[1].parameters.at("selected").size() == 2);
  }
}

TEST_CASE("unbiased selection drops a copy of X") {
  World w = small_world(6);
  for (SfmDataset* d : {&w.train, &w.val}) d->w.col(2) = d->x.array() - d->x.mean();
  InterventionConfig cfg = base_config(Strategy::unbiased_fs);
  cfg.feature_counts = {w.train.dim_w() - 1};
  const CandidateSet set = train_unbiased_fs(w.train, w.val, cfg);
  const auto kept = set.candidates[0].parameters.at("selected").get<std::vector<Index>>();
  CHECK(std::find(kept.begin(), kept.end(), Index{2}) == kept.end());
  CHECK_FALSE(set.candidates[0].scorer.mask.w[2]);
}

TEST_CASE("unaware scorer ignores X and demographic confounders") {
  World w = small_world(7);
  w.train.z_demographic = w.val.z_demographic = {true, false, true};
  const CandidateSet set = train_unaware(w.train, w.val, base_config(Strategy::unaware));
  REQUIRE(set.candidates.size() == 1);
  const TrainedScorer& s = set.candidates[0].scorer;
  CHECK_FALSE(s.mask.x);
  CHECK(s.mask.z == std::vector<bool>{false, true, false});
  CHECK(set.candidates[0].parameters.at("dropped_confounders").size() == 2);
  SfmDataset flipped = w.val;
  flipped.x = Vector::Ones(flipped.n()) - flipped.x;
  CHECK(score(s, flipped) == score(s, w.val));
}

TEST_CASE("fair resampling removes the direct path") {
  const World w = small_world(8);
  InterventionConfig cfg = base_config(Strategy::fair_resampling);
  cfg.lambda_grid = {0.0};
  cfg.draws = 50;
  const CandidateSet a = train_fair_resampling(w.train, w.val, cfg);
  const TrainedScorer& s = a.candidates[0].scorer;
  CHECK(score_with_x(s, w.val, 0.0) == score_with_x(s, w.val, 1.0));
  const EffectTriple e =
      direct_counterfactual_contributions(w.val, s, TargetKind::model_score, 3).means().effects();
  CHECK(std::abs(e.nde) < 1e-12);

  const CandidateSet b = train_fair_resampling(w.train, w.val, cfg);
  CHECK(score(b.candidates[0].scorer, w.val) == score(s, w.val));
  TrainedScorer one = s;
  one.draws = 1;
  CHECK(score(one, w.val) != score(s, w.val));

  cfg.targets = {EffectPath::nde, EffectPath::nie};
  const CandidateSet c = train_fair_resampling(w.train, w.val, cfg);
  CHECK(c.candidates[0].scorer.mediator_pool.has_value());
}

TEST_CASE("fair resampling cannot target the spurious path") {
  InterventionConfig cfg = base_config(Strategy::fair_resampling);
  cfg.targets = {EffectPath::nde, EffectPath::se};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.targets = {EffectPath::nie};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.targets = {EffectPath::nde};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("intervention config validation and round trip") {
  InterventionConfig cfg = base_config(Strategy::inprocessing);
  cfg.targets = {EffectPath::nie, EffectPath::se};
  cfg.lambda_grid = {0.5, 2.0};
  const InterventionConfig back = InterventionConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  cfg.lambda_grid = {};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.lambda_grid = {-1.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = base_config(Strategy::lfr);
  cfg.lfr.prototypes = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  try {
    InterventionConfig::from_json({{"strategy", "telepathy"}});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  CHECK(parse_effect_paths("nde,nie") == std::vector<EffectPath>{EffectPath::nde, EffectPath::nie});
  CHECK_THROWS_AS(parse_effect_paths("nde,xyz"), Error);
}

TEST_CASE("lambda grid is log spaced") {
  const auto g = log_lambda_grid();
  REQUIRE(g.size() == 7);
  CHECK(g.front() == doctest::Approx(0.1));
  CHECK(g.back() == doctest::Approx(100.0));
  CHECK(g[3] == doctest::Approx(std::sqrt(10.0)));
}

TEST_CASE("min-max normalization") {
  const double inf = std::numeric_limits<double>::infinity();
  Vector v(4);
  v << 2.0, inf, 4.0, 3.0;
  const Vector n = minmax_normalize(v);
  CHECK(n(0) == 0.0);
  CHECK(n(1) == 1.0);
  CHECK(n(2) == 1.0);
  CHECK(n(3) == 0.5);
  CHECK(minmax_normalize(Vector::Constant(3, 7.0)) == Vector::Zero(3));
}

TEST_CASE("greedy selection endpoints") {
  Vector imp(5), bias(5);
  imp << 0.9, 0.1, 0.5, 0.7, 0.3;
  bias << 0.8, 0.0, 0.6, 0.9, 0.2;
  CHECK(greedy_selection(imp, bias, 0.0, 2) == IndexList{0, 3});
  CHECK(greedy_selection(imp, bias, 1.0, 2) == IndexList{1, 4});
}

TEST_CASE("greedy curve elbow") {
  Vector imp(4), bias(4);
  imp << 1.0, 0.0, 0.9, 0.1;
  bias << 1.0, 0.0, 0.1, 0.9;
  const GreedyCurve c = greedy_curve(imp, bias, 1, 11);
  CHECK(c.alphas.size() == 11);
  CHECK(c.mean_importance.front() == 1.0);
  CHECK(c.mean_bias.back() == 0.0);
  // Feature 2 (high importance, low bias) dominates the middle of the grid.
  CHECK(greedy_selection(imp, bias, c.alphas[c.elbow], 1) == IndexList{2});

  const GreedyCurve flat = greedy_curve(imp, bias, 4, 11);
  CHECK(flat.elbow == 5);
}

TEST_CASE("rank-sum selection") {
  CHECK(select_by_rank_sum({0.4}, {0.2}, {1.0}) == 0);
  // Candidate 2 is best on both criteria.
  CHECK(select_by_rank_sum({0.5, 0.6, 0.4}, {0.3, 0.2, 0.1}, {0.0, 1.0, 2.0}) == 2);
  // Rank sums tie; the smaller intervention wins.
  CHECK(select_by_rank_sum({0.4, 0.5}, {0.2, 0.1}, {3.0, 1.0}) == 1);
  CHECK(select_by_rank_sum({0.4, 0.4}, {0.2, 0.2}, {0.0, 1.0}) == 0);

  const std::vector<double> b{0.61, 0.55, 0.70, 0.52}, e{0.05, 0.20, 0.01, 0.30}, l{0, 1, 2, 3};
  std::vector<double> b2, e2;
  for (double v : b) b2.push_back(std::exp(3.0 * v));
  for (double v : e) e2.push_back(std::sqrt(v) + 10.0);
  CHECK(select_by_rank_sum(b, e, l) == select_by_rank_sum(b2, e2, l));
  CHECK_THROWS_AS(select_by_rank_sum({}, {}, {}), Error);
}

TEST_CASE("single prototype gives an uninformative scorer") {
  const World w = small_world(9, 800);
  InterventionConfig cfg = base_config(Strategy::lfr);
  cfg.lfr.prototypes = 1;
  cfg.lfr.train.epochs = 5;
  const CandidateSet set = train_lfr(w.train, w.val, cfg);
  const TrainedScorer& s = set.candidates[0].scorer;
  CHECK_FALSE(s.mask.x);
  CHECK(auroc(score(s, w.val), w.val.y) == 0.5);
}

TEST_CASE("LFR parity vanishes for mirrored groups") {
  Rng rng = make_rng(12);
  const Matrix half = testing::random_matrix(25, 3, rng);
  Matrix f(50, 3);
  f << half, half;
  Vector x(50), y(50);
  for (Index i = 0; i < 25; ++i) {
    x(i) = 0.0;
    x(25 + i) = 1.0;
    y(i) = y(25 + i) = i % 2;
  }
  const Vector theta = testing::random_vector(4 * 3 + 4, rng);
  const LfrBatchLoss l = lfr_loss(theta, 4, f, x, y, LfrConfig{}, nullptr);
  CHECK(l.parity < 1e-12);
  CHECK(l.reconstruction > 0.0);
}

TEST_CASE("selection records the winner") {
  const World w = small_world(10);
  InterventionConfig cfg = base_config(Strategy::inprocessing);
  cfg.lambda_grid = {0.0, 10.0};
  CandidateSet set = train_inprocessing(w.train, w.val, cfg);
  const TrainedScorer& chosen = select_candidate(set, w.val, 4);
  REQUIRE(set.selected.has_value());
  CHECK(&chosen == &set.candidates[*set.selected].scorer);
  for (const auto& c : set.candidates) {
    CHECK(c.val_bce > 0.0);
    CHECK(c.val_target_effect == doctest::Approx(std::abs(c.val_effects.nde)));
  }
  const auto j = set.to_json();
  CHECK(j.at("selected") == *set.selected);
  CHECK(j.at("candidates").size() == 2);
}

TEST_CASE("in-processing at lambda 10 halves the direct effect") {
  ScmSpec spec = testing::small_spec(5, 3, 6);
  spec.direct_effect_scale = 15.0;
  const SfmDataset raw = testing::sample_dataset(spec, 4000);
  SplitSpec sp;
  sp.seed = 2;
  const Partitions p = split(raw, sp);
  const SfmDataset train = standardize(p.train, p.train), val = standardize(p.val, p.train);
  InterventionConfig cfg = base_config(Strategy::inprocessing);
  cfg.lambda_grid = {0.0, 10.0};
  CandidateSet set = train_inprocessing(train, val, cfg);
  evaluate_candidates(set, val, 3);
  const double nde0 = std::abs(set.candidates[0].val_effects.nde);
  CHECK(nde0 > 0.01);
  CHECK(std::abs(set.candidates[1].val_effects.nde) <= 0.5 * nde0);
}

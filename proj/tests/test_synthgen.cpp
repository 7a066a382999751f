#include "pathfair/synthgen.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace pathfair;
using testing::small_spec;

namespace {

bool same_network(const DenseNetwork& a, const DenseNetwork& b) { return a.flatten() == b.flatten(); }

}  // namespace

TEST_CASE("init_scm is deterministic under the seed") {
  const ScmWorld a = init_scm(small_spec(11)), b = init_scm(small_spec(11)), c = init_scm(small_spec(12));
  CHECK(same_network(a.y_edge, b.y_edge));
  CHECK(same_network(a.w_edge, b.w_edge));
  CHECK(a.x_bias == b.x_bias);
  CHECK_FALSE(same_network(a.y_edge, c.y_edge));
  CHECK((a.x_marginal >= 0.3 && a.x_marginal <= 0.7));
}

TEST_CASE("knobs mask the X inputs") {
  ScmSpec s = small_spec(4);
  s.direct_effect_scale = 0;
  const ScmWorld w = init_scm(s);
  // Column 0 of the first Y-edge layer is the X input.
  CHECK(w.y_edge.layers().front().weight.col(0).cwiseAbs().maxCoeff() == 0.0);
  const CounterfactualPanel p = sample_panel(w, 300);
  CHECK(p.p10 == p.p00);
  CHECK(p.p11 == p.p01);

  s = small_spec(4);
  s.indirect_effect_scale = 0;
  const CounterfactualPanel q = sample_panel(init_scm(s), 300);
  CHECK(q.w0 == q.w1);

  s = small_spec(4);
  s.xz_association = 0;
  const ScmWorld indep = init_scm(s);
  Rng rng = make_rng(2);
  const Matrix u = testing::random_matrix(50, indep.x_edge.input_dim(), rng);
  CHECK(indep.x_edge.forward(u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("observational columns follow the arm selected by x") {
  const CounterfactualPanel p = sample_panel(init_scm(small_spec(8)), 500);
  for (Index i = 0; i < p.n(); ++i) {
    const bool one = p.x(i) == 1.0;
    CHECK(p.w.row(i) == (one ? p.w1.row(i) : p.w0.row(i)));
    CHECK(p.y(i) == (one ? p.y11(i) : p.y00(i)));
    CHECK(p.p_obs(i) == (one ? p.p11(i) : p.p00(i)));
  }
}

TEST_CASE("panel sampling is deterministic and thread independent") {
  const ScmWorld w = init_scm(small_spec(9));
  set_max_threads(1);
  const CounterfactualPanel a = sample_panel(w, 400);
  set_max_threads(4);
  const CounterfactualPanel b = sample_panel(w, 400);
  set_max_threads(1);
  CHECK(a.w == b.w);
  CHECK(a.p10 == b.p10);
  CHECK(a.y == b.y);
  const CounterfactualPanel c = sample_panel(w, 400, 2);
  CHECK(a.w != c.w);
}

TEST_CASE("true effects satisfy the decomposition identity") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CounterfactualPanel p = sample_panel(init_scm(small_spec(seed)), 300);
    for (TruthSource src : {TruthSource::probabilities, TruthSource::realizations}) {
      const EffectTriple e = true_effects(p, src).effects;
      CHECK(std::abs(e.te - e.nde - e.nie) < 1e-12);
      CHECK(e.nie_opposite_sign() == -e.nie);
    }
  }
}

TEST_CASE("true effects by column arithmetic") {
  CounterfactualPanel p;
  p.x = Vector(2);
  p.x << 0, 1;
  p.p00 = Vector::Constant(2, 0.35);
  p.p10 = Vector::Constant(2, 0.40);
  p.p01 = Vector::Constant(2, 0.5);
  p.p11 = Vector::Constant(2, 0.60);
  p.p_obs = Vector(2);
  p.p_obs << 0.35, 0.60;
  p.y00 = p.y10 = p.y01 = p.y11 = p.y = Vector::Zero(2);
  const EffectTriple e = true_effects(p).effects;
  CHECK(e.nde == doctest::Approx(0.05));
  CHECK(e.nie == doctest::Approx(0.20));
  CHECK(e.te == doctest::Approx(0.25));
  CHECK(e.se == doctest::Approx(0.0));

  p.x = Vector::Ones(2);
  CHECK_THROWS_AS(true_effects(p), Error);
}

TEST_CASE("statistics are invariant to unit permutation") {
  CounterfactualPanel p = sample_panel(init_scm(small_spec(10)), 200);
  const EffectTriple a = true_effects(p).effects;
  IndexList perm(200);
  for (Index i = 0; i < 200; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng = make_rng(1);
  shuffle(perm, rng);
  CounterfactualPanel q = p;
  q.x = take(p.x, perm);
  q.p00 = take(p.p00, perm);
  q.p10 = take(p.p10, perm);
  q.p11 = take(p.p11, perm);
  q.p01 = take(p.p01, perm);
  q.p_obs = take(p.p_obs, perm);
  const EffectTriple b = true_effects(q).effects;
  CHECK(a.nde == doctest::Approx(b.nde).epsilon(1e-12));
  CHECK(a.nie == doctest::Approx(b.nie).epsilon(1e-12));
  CHECK(a.se == doctest::Approx(b.se).epsilon(1e-12));
}

TEST_CASE("Monte-Carlo error halves when n quadruples") {
  ScmSpec s = small_spec(12);
  const ScmWorld w = init_scm(s);
  const TrueEffects a = true_effects(sample_panel(w, 10000));
  const TrueEffects b = true_effects(sample_panel(w, 40000));
  for (auto [x, y] : {std::pair{a.mc_se.nde, b.mc_se.nde}, {a.mc_se.nie, b.mc_se.nie}, {a.mc_se.se, b.mc_se.se}}) {
    const double ratio = x / y;
    CHECK(ratio > 2.0 * 0.7);
    CHECK(ratio < 2.0 * 1.3);
  }
}

TEST_CASE("spec validation and JSON round trip") {
  ScmSpec s = small_spec(1);
  s.xz_association = 1.5;
  CHECK_THROWS_AS(s.validate(), Error);
  s = small_spec(1);
  s.w_noise = NoiseKind::uniform;
  const ScmSpec back = ScmSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
}

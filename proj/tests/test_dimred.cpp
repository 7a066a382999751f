#include "pathfair/dimred.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace pathfair;

namespace {

SfmDataset mean_shift_dataset(const std::vector<double>& shifts, Index n = 400) {
  SfmDataset d;
  d.x.resize(n);
  d.y.resize(n);
  d.z = Matrix::Zero(n, 1);
  d.w = Matrix::Zero(n, static_cast<Index>(shifts.size()));
  for (Index i = 0; i < n; ++i) {
    d.x(i) = i % 2;
    d.y(i) = (i / 2) % 2;
    for (std::size_t j = 0; j < shifts.size(); ++j)
      d.w(i, static_cast<Index>(j)) = d.x(i) * shifts[j] + ((i / 2) % 3 == 0 ? 0.1 : -0.05);
  }
  d.z_names = {"z"};
  d.z_demographic = {false};
  for (std::size_t j = 0; j < shifts.size(); ++j) d.w_names.push_back("w" + std::to_string(j));
  return d;
}

/// Y a noiseless function of mediator `signal`.
SfmDataset planted_outcome(Index signal, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const Index n = 1500, dw = 10;
  SfmDataset d;
  d.x.resize(n);
  d.z = testing::random_matrix(n, 2, rng);
  d.w = testing::random_matrix(n, dw, rng);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    d.x(i) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    d.y(i) = d.w(i, signal) > 0 ? 1.0 : 0.0;
  }
  d.z_names = {"z1", "z2"};
  d.z_demographic = {false, false};
  for (Index j = 0; j < dw; ++j) d.w_names.push_back("w" + std::to_string(j));
  return d;
}

}  // namespace

TEST_CASE("kept count and top_k ties") {
  CHECK(kept_count(40, 0.2) == 8);
  CHECK(kept_count(3, 0.1) == 1);
  CHECK(kept_count(5, 1.0) == 5);
  Vector v(5);
  v << 1, 3, 3, 0, 3;
  CHECK(top_k(v, 2) == IndexList{1, 2});
  CHECK(top_k(Vector::Zero(4), 3) == IndexList{0, 1, 2});
}

TEST_CASE("learn_x ranks by group mean difference") {
  const SfmDataset d = mean_shift_dataset({0.9, 0.0, 0.4});
  IndexList sel = plan_learn_x(d, 2.0 / 3.0).selected;
  std::sort(sel.begin(), sel.end());
  CHECK(sel == IndexList{0, 2});
  CHECK(plan_learn_x(mean_shift_dataset({0.5, 0.5, 0.5, 0.5}), 0.5).selected == IndexList{0, 1});
  CHECK(plan_learn_x(d, 1.0).selected.size() == 3);
}

TEST_CASE("learn_y ranks the planted mediator first") {
  const SfmDataset d = planted_outcome(7, 3);
  DimredConfig cfg;
  for (ReductionMethod m : {ReductionMethod::learn_y_lasso, ReductionMethod::learn_y_pfi}) {
    const ReductionPlan p = plan_learn_y(d, 0.2, m, cfg, 5);
    REQUIRE(p.selected.size() == 2);
    CHECK(p.selected.front() == 7);
  }
  const ReductionPlan a = plan_learn_y(d, 0.3, ReductionMethod::learn_y_pfi, cfg, 8);
  const ReductionPlan b = plan_learn_y(d, 0.3, ReductionMethod::learn_y_pfi, cfg, 8);
  CHECK(a.selected == b.selected);
}

TEST_CASE("selection plans at keep_fraction 1 are the identity") {
  const SfmDataset d = testing::sample_dataset(testing::small_spec(31), 600);
  DimredConfig cfg;
  for (ReductionMethod m : {ReductionMethod::learn_x, ReductionMethod::learn_y_lasso, ReductionMethod::learn_y_pfi}) {
    const ReductionPlan p = make_plan(m, d, 1.0, cfg, 1);
    const SfmDataset r = apply(p, d);
    std::set<Index> sel(p.selected.begin(), p.selected.end());
    CHECK(sel.size() == static_cast<std::size_t>(d.dim_w()));
    CHECK(r.w == d.w);
    CHECK(r.w_names == d.w_names);
  }
}

TEST_CASE("apply: selection, identity, projection and schema checks") {
  const SfmDataset d = mean_shift_dataset({0.9, 0.0, 0.4});
  ReductionPlan p = plan_learn_x(d, 2.0 / 3.0);
  const SfmDataset r = apply(p, d);
  REQUIRE(r.dim_w() == 2);
  CHECK(r.w.col(0) == d.w.col(p.selected[0]));
  CHECK(r.w.col(1) == d.w.col(p.selected[1]));
  CHECK(r.x == d.x);
  CHECK(r.z == d.z);
  CHECK(r.y == d.y);

  const SfmDataset twice = apply(p, r);
  CHECK(twice.w == r.w);
  CHECK(twice.w_names == r.w_names);

  CHECK(apply(plan_none(d), d).w == d.w);

  const SfmDataset other = mean_shift_dataset({0.9, 0.0, 0.4, 0.2});
  try {
    apply(p, other);
    FAIL("expected schema mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schema_mismatch);
  }
}

TEST_CASE("plan JSON round trip") {
  const SfmDataset d = testing::sample_dataset(testing::small_spec(32), 400);
  const ReductionPlan p = plan_learn_x(d, 0.5);
  const ReductionPlan back = ReductionPlan::from_json(p.to_json());
  CHECK(back.selected == p.selected);
  CHECK(apply(back, d).w == apply(p, d).w);
}

TEST_CASE("learn_w autoencoder plan") {
  const SfmDataset d = testing::sample_dataset(testing::small_spec(33), 400);
  DimredConfig cfg;
  cfg.autoencoder.epochs = 5;
  const ReductionPlan p = plan_learn_w(d, 0.5, cfg, 2);
  REQUIRE(p.autoencoder.has_value());
  CHECK(p.output_dim() == 3);
  const SfmDataset r = apply(p, d);
  CHECK(r.dim_w() == 3);
  CHECK(r.w_names.front() == "latent1");
  const ReductionPlan back = ReductionPlan::from_json(p.to_json());
  CHECK(apply(back, d).w == r.w);
}

TEST_CASE("percent error") {
  CHECK(*percent_error(0.11, 0.1) == doctest::Approx(10.0));
  CHECK_FALSE(percent_error(0.1, 5e-5).has_value());
}

TEST_CASE("benchmark shares SE across methods and is deterministic") {
  BenchmarkGrid g;
  g.worlds = {testing::small_spec(0, 3, 10)};
  g.n_values = {600};
  g.methods = {ReductionMethod::learn_x, ReductionMethod::learn_y_pfi};
  g.fractions = {0.2, 0.5};
  g.replicates = 2;
  g.seed = 4;
  const BenchmarkResult a = benchmark_reduction(g);
  for (const auto& rep : a.replicates) {
    REQUIRE(rep.estimates.size() == 5);
    CHECK(rep.conditions.front().first == "none");
    for (const auto& e : rep.estimates) CHECK(e.se == rep.estimates.front().se);
  }
  g.replicates = 1;
  std::ostringstream x, y;
  write_benchmark_csv(benchmark_reduction(g).rows, x);
  write_benchmark_csv(benchmark_reduction(g).rows, y);
  CHECK(x.str() == y.str());
  CHECK(x.str().rfind("dim_w,n,method,fraction,effect,mean_pct_error,ci_lo,ci_hi\n", 0) == 0);
}

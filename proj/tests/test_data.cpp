#include "pathfair/sfm_data.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace pathfair;

namespace {

const char* kCsv =
    "gender,age,hcu,w1,w2,label\n"
    "F,30,2,0.5,1.5,1\n"
    "M,41,0,1.0,-2.0,0\n"
    "F,52,5,0.0,0.25,0\n"
    "M,28,1,2.5,3.0,1\n";

RoleManifest gender_manifest() {
  return RoleManifest::from_json(nlohmann::json::parse(R"({
    "sensitive": {"column": "gender", "x0": "M", "x1": "F"},
    "outcome": "label",
    "confounders": ["age", "hcu"],
    "mediators": ["w1", "w2"]})"));
}

ErrorKind load_error(const std::string& csv, const RoleManifest& m) {
  std::istringstream in(csv);
  try {
    load_dataset(in, m);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::config;
}

std::string load_message(const std::string& csv, const RoleManifest& m) {
  std::istringstream in(csv);
  try {
    load_dataset(in, m);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("load binds roles") {
  std::istringstream in(kCsv);
  const SfmDataset d = load_dataset(in, gender_manifest());
  CHECK(d.n() == 4);
  CHECK(d.dim_z() == 2);
  CHECK(d.dim_w() == 2);
  CHECK(d.x(0) == 1.0);
  CHECK(d.x(1) == 0.0);
  CHECK(d.w(3, 1) == 3.0);
  CHECK(d.y.sum() == 2.0);
  CHECK(d.z_names == std::vector<std::string>{"age", "hcu"});
}

TEST_CASE("mediator prefix selects columns") {
  auto m = gender_manifest();
  m.mediator_columns.clear();
  m.mediator_prefix = "w";
  std::istringstream in(kCsv);
  const SfmDataset d = load_dataset(in, m);
  CHECK(d.w_names == std::vector<std::string>{"w1", "w2"});
}

TEST_CASE("load errors") {
  auto m = gender_manifest();
  m.mediator_columns.push_back("w3");
  CHECK(load_error(kCsv, m) == ErrorKind::manifest);
  CHECK(load_message(kCsv, m).find("w3") != std::string::npos);

  std::string coded = kCsv;
  coded.replace(coded.find("F,52"), 1, "U");
  CHECK(load_error(coded, gender_manifest()) == ErrorKind::coding);
  CHECK(load_message(coded, gender_manifest()).find("U") != std::string::npos);

  std::string bad = kCsv;
  bad.replace(bad.find("0.25"), 4, "abc");
  CHECK(load_error(bad, gender_manifest()) == ErrorKind::parse);

  std::string missing = kCsv;
  missing.replace(missing.find("0.25"), 4, "");
  CHECK(load_error(missing, gender_manifest()) == ErrorKind::parse);
}

TEST_CASE("manifest roles must be disjoint and mediators nonempty") {
  CHECK_THROWS_AS(RoleManifest::from_json(nlohmann::json::parse(R"({
    "sensitive": {"column": "g", "x0": "0", "x1": "1"}, "outcome": "y",
    "confounders": ["a", "w1"], "mediators": ["w1"]})")),
                  Error);
  CHECK_THROWS_AS(RoleManifest::from_json(nlohmann::json::parse(R"({
    "sensitive": {"column": "g", "x0": "0", "x1": "1"}, "outcome": "y",
    "confounders": ["a"], "mediators": []})")),
                  Error);
}

TEST_CASE("csv round trip through write_csv and manifest") {
  std::istringstream in(kCsv);
  const SfmDataset d = load_dataset(in, gender_manifest());
  std::ostringstream out;
  write_csv(d, out);
  std::istringstream back(out.str());
  const SfmDataset e = load_dataset(back, RoleManifest::from_json(d.manifest().to_json()));
  CHECK(e.x == d.x);
  CHECK(e.z == d.z);
  CHECK(e.w == d.w);
  CHECK(e.y == d.y);
}

TEST_CASE("standardize") {
  SfmDataset d;
  d.x = Vector::Zero(2);
  d.x(1) = 1;
  d.y = d.x;
  d.z = Matrix(2, 1);
  d.z << 2, 4;
  d.w = Matrix(2, 1);
  d.w << 3, 3;
  d.z_names = {"z"};
  d.w_names = {"w"};
  d.z_demographic = {false};
  const SfmDataset s = standardize(d, d);
  CHECK(s.z(0, 0) == doctest::Approx(-1.0));
  CHECK(s.z(1, 0) == doctest::Approx(1.0));
  CHECK(s.w.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.x == d.x);

  // Second pass against its own statistics is the identity.
  SfmDataset raw = s;
  raw.standardization.reset();
  const SfmDataset again = standardize(raw, raw);
  CHECK((again.z - s.z).cwiseAbs().maxCoeff() < 1e-15);

  const SfmDataset big = testing::sample_dataset(testing::small_spec(3), 500);
  const SfmDataset round = unstandardize(standardize(big, big));
  CHECK(((round.w - big.w).cwiseAbs().array() / (1.0 + big.w.cwiseAbs().array())).maxCoeff() < 1e-9);
  CHECK(((round.z - big.z).cwiseAbs().array() / (1.0 + big.z.cwiseAbs().array())).maxCoeff() < 1e-9);

  SfmDataset narrow = big;
  narrow.w = big.w.leftCols(2);
  narrow.w_names.resize(2);
  CHECK_THROWS_AS(standardize(narrow, big), Error);
}

TEST_CASE("split sizes, disjointness and determinism") {
  const SfmDataset d = testing::sample_dataset(testing::small_spec(5), 100);
  SplitSpec spec;
  spec.seed = 3;
  const SplitIndices a = split_indices(d, spec);
  CHECK(a.train.size() == 70);
  CHECK(a.val.size() == 15);
  CHECK(a.test.size() == 15);
  const SplitIndices b = split_indices(d, spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
}

TEST_CASE("split partitions are exhaustive over random seeds") {
  const SfmDataset d = testing::sample_dataset(testing::small_spec(6), 400);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    SplitSpec spec;
    spec.seed = seed;
    const SplitIndices s = split_indices(d, spec);
    std::set<Index> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (Index i : *part) CHECK(seen.insert(i).second);
    CHECK(seen.size() == 400);
  }
}

TEST_CASE("split with a singleton stratum is infeasible") {
  SfmDataset d;
  d.x = Vector(3);
  d.x << 0, 1, 1;
  d.y = Vector(3);
  d.y << 1, 0, 1;
  d.z = Matrix::Zero(3, 1);
  d.w = Matrix::Zero(3, 1);
  d.z_names = {"z"};
  d.w_names = {"w"};
  d.z_demographic = {false};
  try {
    split_indices(d, SplitSpec{});
    FAIL("expected infeasible split");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::infeasible_split);
  }
}

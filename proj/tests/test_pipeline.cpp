#include "pathfair/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <map>

using namespace pathfair;
using nlohmann::json;

namespace {

json small_config(const std::filesystem::path& out) {
  return {{"seed", 3},
          {"output_dir", out.string()},
          {"data", {{"synthetic", {{"n", 800}, {"dim_z", 2}, {"dim_w", 4}, {"hidden_width", 8}}}}},
          {"estimation", {{"bootstrap", 0}}},
          {"report", {{"bootstrap", 0}, {"metric_bootstrap", 0}}},
          {"interventions", json::array()}};
}

std::map<std::string, std::string> hashes(const PipelineResult& r) {
  std::map<std::string, std::string> m;
  for (const auto& a : r.artifacts) m[a.path] = a.sha256;
  return m;
}

std::string file_hash(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return sha256_hex(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::optional<ErrorKind> kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("pipeline config schema errors") {
  const testing::TempDir dir("schema");
  json j = small_config(dir.path / "out");
  j.erase("interventions");
  CHECK(kind_of([&] { PipelineConfig::from_json(j); }) == ErrorKind::config);

  j = small_config(dir.path / "out");
  j["mystery"] = 1;
  CHECK(kind_of([&] { PipelineConfig::from_json(j); }) == ErrorKind::config);

  j = small_config(dir.path / "out");
  j["interventions"] = json::array({{{"strategy", "inprocessing"}, {"lambda_grid", {-1}}}});
  CHECK(kind_of([&] { PipelineConfig::from_json(j); }) == ErrorKind::config);

  j = small_config(dir.path / "out");
  j["estimation"]["estimator"] = "direct_counterfactual";
  CHECK(kind_of([&] { PipelineConfig::from_json(j); }) == ErrorKind::config);

  std::ofstream(dir.path / "broken.json") << "{\"seed\": ";
  CHECK(kind_of([&] { PipelineConfig::read_file(dir.path / "broken.json"); }) == ErrorKind::config);
  // Nothing was computed.
  CHECK_FALSE(std::filesystem::exists(dir.path / "out"));
}

TEST_CASE("minimal pipeline run") {
  const testing::TempDir dir("minimal");
  const PipelineConfig cfg = PipelineConfig::from_json(small_config(dir.path / "out"));
  const PipelineResult r = run_pipeline(cfg);
  REQUIRE(r.report.size() == 2);
  CHECK(r.report[0].experiment == "Data");
  CHECK(r.report[1].experiment == "baseline");
  CHECK(r.report[1].auroc.has_value());

  const auto h = hashes(r);
  for (const char* p : {"config.json", "data/data.csv", "data/truth.json", "split/test.csv", "split/split.json",
                        "models/baseline.json", "report/report.csv", "report/report_config.json"}) {
    CAPTURE(p);
    CHECK(h.count(p) == 1);
    CHECK(std::filesystem::exists(dir.path / "out" / p));
  }
  for (const auto& a : r.artifacts) {
    CHECK(a.sha256 == file_hash(dir.path / "out" / a.path));
    CHECK_FALSE(a.stage.empty());
  }
  const json manifest = json::parse(std::ifstream(dir.path / "out" / "manifest.json"));
  CHECK(manifest.at("artifacts").size() == r.artifacts.size());
  std::vector<std::string> paths;
  for (const auto& a : manifest.at("artifacts")) paths.push_back(a.at("path").get<std::string>());
  CHECK(std::is_sorted(paths.begin(), paths.end()));

  const auto models = read_model_directory(dir.path / "out" / "models");
  REQUIRE(models.size() == 1);
  CHECK(models[0].tag == "baseline");
}

TEST_CASE("pipeline artifacts are deterministic across thread counts") {
  const testing::TempDir dir("determinism");
  json j = small_config(dir.path / "a");
  j["interventions"] = json::array({{{"strategy", "inprocessing"}, {"lambda_grid", {0, 1}}},
                                    {{"strategy", "unbiased_fs"}}});
  set_max_threads(1);
  const PipelineResult a = run_pipeline(PipelineConfig::from_json(j));
  j["output_dir"] = (dir.path / "b").string();
  set_max_threads(3);
  const PipelineResult b = run_pipeline(PipelineConfig::from_json(j));
  set_max_threads(1);
  auto ha = hashes(a), hb = hashes(b);
  ha.erase("config.json");
  hb.erase("config.json");
  CHECK(ha == hb);
  CHECK(ha.count("models/002_unbiased_fs.json") == 1);
  CHECK(std::filesystem::exists(dir.path / "a" / "interventions" / "0_inprocessing_nde_" / "selection.json"));
}

TEST_CASE("pipeline reads a CSV with relative paths") {
  const testing::TempDir dir("csv");
  const SfmDataset d = testing::sample_dataset(testing::small_spec(4, 2, 3), 700);
  write_csv(d, dir.path / "d.csv");
  std::ofstream(dir.path / "m.json") << d.manifest().to_json().dump();
  json j = small_config(dir.path / "out");
  j["data"] = {{"csv", "d.csv"}, {"manifest", "m.json"}};
  std::ofstream(dir.path / "cfg.json") << j.dump();
  const PipelineResult r = run_pipeline(PipelineConfig::read_file(dir.path / "cfg.json"));
  CHECK(r.report.size() == 2);

  j["data"]["csv"] = "missing.csv";
  j["output_dir"] = (dir.path / "out2").string();
  std::ofstream(dir.path / "cfg2.json") << j.dump();
  const PipelineConfig bad = PipelineConfig::read_file(dir.path / "cfg2.json");
  try {
    run_pipeline(bad);
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage 'load'") != std::string::npos);
  }
  CHECK(std::filesystem::exists(dir.path / "out2" / "manifest.json"));
}

TEST_CASE("test partition stays locked until the report") {
  PartitionGuard g(testing::sample_dataset(testing::small_spec(5, 2, 2), 50));
  CHECK_FALSE(g.unlocked());
  CHECK(kind_of([&] { (void)g.test(); }) == ErrorKind::data);
  g.unlock_for_report();
  CHECK(g.test().n() == 50);
}

TEST_CASE("model file names") {
  CHECK(model_file_name(7, "inprocessing[nde+nie]") == "007_inprocessing_nde_nie_.json");
  CHECK(model_file_name(12, "lfr") == "012_lfr.json");
}

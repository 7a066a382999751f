#include "pathfair/pipeline.hpp"

#include "pathfair/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pathfair {

using nlohmann::json;
namespace fs = std::filesystem;

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  validate_pipeline_config(j);
  PipelineConfig c;
  c.source = j;
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output_dir")) c.output_dir = base_dir / j.at("output_dir").get<std::string>();

  const json& data = j.at("data");
  if (data.contains("synthetic")) {
    json spec = data.at("synthetic");
    c.n = spec.at("n").get<Index>();
    spec.erase("n");
    c.scm = ScmSpec::from_json(spec);
    c.scm->seed = stage_seed(c.seed, "synth");
  } else {
    c.csv = base_dir / data.at("csv").get<std::string>();
    c.manifest = base_dir / data.at("manifest").get<std::string>();
  }

  const json split = j.value("split", json::object());
  c.split.train_fraction = split.value("train", c.split.train_fraction);
  c.split.val_fraction = split.value("val", c.split.val_fraction);
  c.split.test_fraction = split.value("test", c.split.test_fraction);
  if (split.value("stratify", std::string("outcome_sensitive")) == "outcome")
    c.split.stratify_on = StratifyOn::outcome;
  c.split.seed = stage_seed(c.seed, "split");
  c.split.validate();

  const json est = j.value("estimation", json::object());
  if (est.contains("learner")) c.estimate.learner = LearnerConfig::from_json(est.at("learner"));
  if (est.contains("estimator"))
    c.estimate.estimator = estimator_kind_from_string(est.at("estimator").get<std::string>());
  if (c.estimate.estimator == EstimatorKind::direct_counterfactual)
    throw Error(ErrorKind::config, "data effects need the dr or plugin estimator");
  c.estimate.learner.k_folds = est.value("folds", c.estimate.learner.k_folds);
  c.estimate.learner.clip = est.value("clip", c.estimate.learner.clip);
  c.estimate.bootstrap = est.value("bootstrap", c.estimate.bootstrap);
  c.estimate.refit_in_bootstrap = est.value("refit_in_bootstrap", c.estimate.refit_in_bootstrap);
  c.estimate.target = TargetKind::data_outcome;
  c.estimate.seed = stage_seed(c.seed, "estimate");
  c.estimate.validate();

  if (j.contains("reduction")) {
    const json& r = j.at("reduction");
    c.reduction = reduction_method_from_string(r.at("method").get<std::string>());
    c.keep_fraction = r.value("keep_fraction", c.reduction == ReductionMethod::none ? 1.0 : 0.2);
    if (r.contains("config")) c.dimred = DimredConfig::from_json(r.at("config"));
  }

  if (j.contains("baseline")) c.baseline = BaselineConfig::from_json(j.at("baseline"));
  c.baseline.train.seed = stage_seed(c.seed, "baseline");

  std::size_t k = 0;
  for (const auto& item : j.at("interventions")) {
    InterventionConfig ic = InterventionConfig::from_json(item);
    ic.base = c.baseline;
    ic.seed = stage_seed(c.seed, "intervention:" + std::to_string(k++) + ":" + to_string(ic.strategy));
    ic.lfr.train.seed = ic.seed;
    ic.validate();
    c.interventions.push_back(std::move(ic));
  }

  const json rep = j.value("report", json::object());
  c.report.estimate = c.estimate;
  c.report.estimate.target = TargetKind::model_hard_label;
  if (rep.contains("estimator"))
    c.report.estimate.estimator = estimator_kind_from_string(rep.at("estimator").get<std::string>());
  c.report.estimate.bootstrap = rep.value("bootstrap", c.estimate.bootstrap);
  c.report.metric_bootstrap = rep.value("metric_bootstrap", c.report.metric_bootstrap);
  c.report.seed = stage_seed(c.seed, "report");
  c.report.estimate.validate();
  return c;
}

PipelineConfig PipelineConfig::read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j, path.parent_path());
}

const SfmDataset& PartitionGuard::test() const {
  if (!unlocked_) throw Error(ErrorKind::data, "test partition accessed before the report stage");
  return test_;
}

namespace {

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& stage, const std::string& content) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write " + p.string());
    out << content;
    if (!out) throw Error(ErrorKind::data, "write failed for " + p.string());
    records_.push_back({rel, stage, sha256_hex(content)});
  }

  void write_json(const std::string& rel, const std::string& stage, const json& j) {
    write(rel, stage, j.dump(1) + "\n");
  }

  void write_dataset(const std::string& rel, const std::string& stage, const SfmDataset& d) {
    std::ostringstream ss;
    write_csv(d, ss);
    write(rel, stage, ss.str());
  }

  void write_manifest() {
    std::vector<ArtifactRecord> sorted = records_;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    json arts = json::array();
    for (const auto& r : sorted) arts.push_back({{"path", r.path}, {"stage", r.stage}, {"sha256", r.sha256}});
    const fs::path p = root_ / "manifest.json";
    std::ofstream out(p, std::ios::binary);
    out << json{{"artifacts", arts}}.dump(1) << "\n";
  }

  const std::vector<ArtifactRecord>& records() const { return records_; }

 private:
  fs::path root_;
  std::vector<ArtifactRecord> records_;
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage '" + name + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::data, "stage '" + name + "': " + e.what());
  }
}

std::string intervention_label(const InterventionConfig& ic) {
  std::string label = to_string(ic.strategy);
  if (ic.strategy == Strategy::inprocessing || ic.strategy == Strategy::fair_resampling) {
    label += "[";
    for (std::size_t i = 0; i < ic.targets.size(); ++i) label += (i ? "+" : "") + to_string(ic.targets[i]);
    label += "]";
  }
  return label;
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return s;
}

}  // namespace

std::string model_file_name(std::size_t index, const std::string& label) {
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%03zu_", index);
  return prefix + file_safe(label) + ".json";
}

std::vector<TrainedScorer> read_model_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json" && entry.path().filename() != "baseline.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<TrainedScorer> out;
  if (fs::exists(dir / "baseline.json")) out.push_back(TrainedScorer::read_file(dir / "baseline.json"));
  for (const auto& f : files) out.push_back(TrainedScorer::read_file(f));
  if (out.empty()) throw Error(ErrorKind::data, "no model JSON files in " + dir.string());
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  fs::create_directories(config.output_dir);
  ArtifactWriter out(config.output_dir);
  PipelineResult result;
  result.output_dir = config.output_dir;

  struct Finally {
    ArtifactWriter& w;
    ~Finally() {
      try {
        w.write_manifest();
      } catch (...) {
      }
    }
  } finally{out};

  out.write_json("config.json", "config", config.source);

  // Load or synthesize.
  const SfmDataset full = stage("load", [&] {
    if (config.scm) {
      const ScmWorld world = init_scm(*config.scm);
      const CounterfactualPanel panel = sample_panel(world, config.n, 1);
      out.write_json("data/truth.json", "load",
                     {{"spec", config.scm->to_json()}, {"n", config.n},
                      {"true_effects", true_effects(panel, config.scm->truth_source).to_json()}});
      SfmDataset d = observational_dataset(panel);
      out.write_dataset("data/data.csv", "load", d);
      out.write_json("data/manifest.json", "load", d.manifest().to_json());
      return d;
    }
    SfmDataset d = load_dataset(*config.csv, RoleManifest::read_file(*config.manifest));
    d.validate();
    return d;
  });

  // Split; partitions are written raw and standardized in memory with the train reference.
  Partitions parts = stage("split", [&] { return split(full, config.split); });
  out.write_json("split/split.json", "split", parts.indices.to_json());
  out.write_dataset("split/train.csv", "split", parts.train);
  out.write_dataset("split/val.csv", "split", parts.val);
  out.write_dataset("split/test.csv", "split", parts.test);
  out.write_json("split/manifest.json", "split", parts.train.manifest().to_json());
  const SfmDataset train = standardize(parts.train, parts.train);
  const SfmDataset val = standardize(parts.val, parts.train);
  PartitionGuard guard(std::move(parts.test));

  // Reduction (effect estimation only).
  const ReductionPlan plan = stage("dimred", [&] {
    return make_plan(config.reduction, train, config.keep_fraction, config.dimred,
                     stage_seed(config.seed, "dimred"));
  });
  out.write_json("dimred/plan.json", "dimred", plan.to_json());

  stage("estimate", [&] {
    const EffectReport rep = estimate_effects(apply(plan, train), config.estimate);
    json j = rep.to_json();
    j["partition"] = "train";
    j["reduction"] = to_string(plan.method);
    out.write_json("effects/data_effects.json", "estimate", j);
    return 0;
  });

  std::vector<TrainedScorer> scorers;
  scorers.push_back(stage("baseline", [&] { return train_baseline(train, val, config.baseline); }));
  out.write_json("models/baseline.json", "baseline", scorers.back().to_json());

  for (std::size_t k = 0; k < config.interventions.size(); ++k) {
    const InterventionConfig& ic = config.interventions[k];
    const std::string label = intervention_label(ic);
    const std::string dir = "interventions/" + std::to_string(k) + "_" + file_safe(label);
    stage("intervention " + label, [&] {
      CandidateSet set = train_intervention(train, val, ic);
      TrainedScorer chosen = select_candidate(set, val, stage_seed(config.seed, "select:" + dir));
      for (std::size_t c = 0; c < set.candidates.size(); ++c)
        out.write_json(dir + "/candidate_" + std::to_string(c) + ".json", "interventions",
                       set.candidates[c].scorer.to_json());
      json sel = set.to_json();
      sel["config"] = ic.to_json();
      out.write_json(dir + "/selection.json", "interventions", sel);
      chosen.tag = label;
      out.write_json("models/" + model_file_name(k + 1, label), "interventions", chosen.to_json());
      scorers.push_back(std::move(chosen));
      return 0;
    });
  }

  out.write_json("report/report_config.json", "report", config.report.to_json());
  guard.unlock_for_report();
  result.report = stage("report", [&] { return build_report(guard.test(), scorers, config.report); });
  {
    std::ostringstream csv, corr;
    write_report_csv(result.report, csv);
    write_correlation_csv(result.report, corr);
    out.write("report/report.csv", "report", csv.str());
    out.write("report/correlations.csv", "report", corr.str());
    out.write_json("report/plot_data.json", "report", plot_data(result.report));
    json rows = json::array();
    for (const auto& r : result.report) rows.push_back({{"experiment", r.experiment}, {"effects", r.effects.to_json()}});
    out.write_json("report/effects.json", "report", rows);
  }
  result.artifacts = out.records();
  return result;
}

}  // namespace pathfair

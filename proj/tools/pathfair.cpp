#include "pathfair/dimred.hpp"
#include "pathfair/effects.hpp"
#include "pathfair/interventions.hpp"
#include "pathfair/pipeline.hpp"
#include "pathfair/report.hpp"
#include "pathfair/scorer.hpp"
#include "pathfair/sfm_data.hpp"
#include "pathfair/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pathfair;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

SfmDataset load(const std::string& csv, const std::string& manifest) {
  SfmDataset d = load_dataset(csv, RoleManifest::read_file(manifest));
  d.validate();
  return d;
}

/// Standardized (train, val). Without a validation file, 20% of the rows are
/// held out by a stratified split.
std::pair<SfmDataset, SfmDataset> train_val(const std::string& csv, const std::string& manifest,
                                            const std::string& val_csv, std::uint64_t seed) {
  SfmDataset train = load(csv, manifest), val;
  if (!val_csv.empty()) {
    val = load(val_csv, manifest);
  } else {
    SplitSpec spec{.train_fraction = 0.8, .val_fraction = 0.1, .test_fraction = 0.1,
                   .seed = stage_seed(seed, "split")};
    SplitIndices idx = split_indices(train, spec);
    idx.val.insert(idx.val.end(), idx.test.begin(), idx.test.end());
    std::sort(idx.val.begin(), idx.val.end());
    val = subset(train, idx.val);
    train = subset(train, idx.train);
  }
  return {standardize(train, train), standardize(val, train)};
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("PATHFAIR_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::config, "PATHFAIR_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-specific causal fairness pipeline"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker cap (default: PATHFAIR_THREADS or all cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "Sample a counterfactual panel from an SCM spec");
  std::string spec_path, synth_out, observed_out;
  Index synth_n = 0;
  std::uint64_t synth_seed = 0;
  bool synth_seed_set = false;
  synth->add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
  synth->add_option("--n", synth_n)->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Overrides the seed in the spec file")
      ->each([&](const std::string&) { synth_seed_set = true; });
  synth->add_option("--out", synth_out, "Panel CSV; truth.json is written beside it")->required();
  synth->add_option("--observed", observed_out,
                    "Observational CSV (manifest written as <stem>.manifest.json)");

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate TE/NDE/NIE/SE");
  std::string est_data, est_manifest, est_model, est_out, est_target = "data", est_estimator = "dr";
  int est_folds = 2, est_bootstrap = 200;
  double est_clip = 0.01;
  std::uint64_t est_seed = 0;
  bool fast_bootstrap = false;
  est->add_option("--data", est_data)->required()->check(CLI::ExistingFile);
  est->add_option("--manifest", est_manifest)->required()->check(CLI::ExistingFile);
  est->add_option("--target", est_target)->check(CLI::IsMember({"data", "model", "model_score"}));
  est->add_option("--model", est_model)->check(CLI::ExistingFile);
  est->add_option("--estimator", est_estimator)->check(CLI::IsMember({"dr", "plugin", "direct_counterfactual"}));
  est->add_option("--folds", est_folds);
  est->add_option("--bootstrap", est_bootstrap);
  est->add_option("--clip", est_clip);
  est->add_option("--seed", est_seed);
  est->add_flag("--fast-bootstrap", fast_bootstrap, "Resample unit contributions instead of refitting");
  est->add_option("--out", est_out)->required();

  // dimred-bench
  auto* bench = app.add_subcommand("dimred-bench", "Mediator reduction benchmark");
  std::string grid_path, bench_out;
  bench->add_option("--grid", grid_path)->required()->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Train the baseline scorer");
  std::string tr_data, tr_manifest, tr_val, tr_out, tr_config;
  std::uint64_t tr_seed = 0;
  train->add_option("--data", tr_data)->required()->check(CLI::ExistingFile);
  train->add_option("--manifest", tr_manifest)->required()->check(CLI::ExistingFile);
  train->add_option("--val", tr_val)->check(CLI::ExistingFile);
  train->add_option("--config", tr_config, "Baseline config JSON")->check(CLI::ExistingFile);
  train->add_option("--seed", tr_seed);
  train->add_option("--out", tr_out)->required();

  // intervene
  auto* inter = app.add_subcommand("intervene", "Train an intervention and select a candidate");
  std::string iv_strategy, iv_targets, iv_data, iv_manifest, iv_val, iv_config, iv_out;
  std::uint64_t iv_seed = 0;
  inter->add_option("--strategy", iv_strategy)->required();
  inter->add_option("--targets", iv_targets, "Comma-separated subset of nde,nie,se");
  inter->add_option("--data", iv_data)->required()->check(CLI::ExistingFile);
  inter->add_option("--manifest", iv_manifest)->required()->check(CLI::ExistingFile);
  inter->add_option("--val", iv_val)->check(CLI::ExistingFile);
  inter->add_option("--config", iv_config, "Intervention config JSON")->check(CLI::ExistingFile);
  inter->add_option("--seed", iv_seed);
  inter->add_option("--out", iv_out)->required();

  // report
  auto* rep = app.add_subcommand("report", "Tradeoff report on a test partition");
  std::string rp_data, rp_manifest, rp_models, rp_out, rp_plot, rp_corr, rp_config;
  int rp_bootstrap = 200, rp_metric_bootstrap = 200;
  std::uint64_t rp_seed = 0;
  rep->add_option("--data", rp_data)->required()->check(CLI::ExistingFile);
  rep->add_option("--manifest", rp_manifest)->required()->check(CLI::ExistingFile);
  rep->add_option("--models", rp_models)->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", rp_out)->required();
  rep->add_option("--plotdata", rp_plot);
  rep->add_option("--correlations", rp_corr);
  rep->add_option("--config", rp_config, "Report config JSON (as written by run)")->check(CLI::ExistingFile);
  rep->add_option("--bootstrap", rp_bootstrap);
  rep->add_option("--metric-bootstrap", rp_metric_bootstrap);
  rep->add_option("--seed", rp_seed);

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
  std::string run_config, run_out;
  run->add_option("--config", run_config)->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Overrides output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code_for(ErrorKind::config);
  }

  try {
    set_max_threads(resolve_threads(threads));

    if (*synth) {
      ScmSpec spec = ScmSpec::from_json(read_json(spec_path));
      if (synth_seed_set) spec.seed = synth_seed;
      const ScmWorld world = init_scm(spec);
      const CounterfactualPanel panel = sample_panel(world, synth_n, 1);
      const fs::path out(synth_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_panel_csv(panel, out);
      write_json(out.parent_path() / "truth.json",
                 {{"spec", spec.to_json()}, {"n", synth_n},
                  {"true_effects", true_effects(panel, spec.truth_source).to_json()}});
      if (!observed_out.empty()) {
        const fs::path obs(observed_out);
        const SfmDataset d = observational_dataset(panel);
        if (obs.has_parent_path()) fs::create_directories(obs.parent_path());
        write_csv(d, obs);
        fs::path man = obs;
        man.replace_extension(".manifest.json");
        write_json(man, d.manifest().to_json());
      }
    } else if (*est) {
      const SfmDataset d = load(est_data, est_manifest);
      EstimateConfig cfg;
      cfg.target = est_target == "model"       ? TargetKind::model_hard_label
                   : est_target == "data"      ? TargetKind::data_outcome
                                               : TargetKind::model_score;
      cfg.estimator = estimator_kind_from_string(est_estimator);
      cfg.learner.k_folds = est_folds;
      cfg.learner.clip = est_clip;
      cfg.bootstrap = est_bootstrap;
      cfg.refit_in_bootstrap = !fast_bootstrap;
      cfg.seed = est_seed;
      cfg.validate();
      std::optional<TrainedScorer> model;
      if (!est_model.empty()) model = TrainedScorer::read_file(est_model);
      if (cfg.target != TargetKind::data_outcome && !model)
        throw Error(ErrorKind::config, "--target model needs --model");
      const EffectReport r = estimate_effects(d, cfg, model ? &*model : nullptr);
      write_json(est_out, r.to_json());
    } else if (*bench) {
      const BenchmarkGrid grid = BenchmarkGrid::from_json(read_json(grid_path));
      const BenchmarkResult result = benchmark_reduction(grid);
      std::ostringstream ss;
      write_benchmark_csv(result.rows, ss);
      write_text(bench_out, ss.str());
    } else if (*train) {
      BaselineConfig cfg;
      if (!tr_config.empty()) cfg = BaselineConfig::from_json(read_json(tr_config));
      cfg.train.seed = stage_seed(tr_seed, "baseline");
      const auto [tr, va] = train_val(tr_data, tr_manifest, tr_val, tr_seed);
      train_baseline(tr, va, cfg).write_file(tr_out);
    } else if (*inter) {
      InterventionConfig cfg;
      if (!iv_config.empty()) cfg = InterventionConfig::from_json(read_json(iv_config));
      cfg.strategy = strategy_from_string(iv_strategy);
      if (!iv_targets.empty()) cfg.targets = parse_effect_paths(iv_targets);
      cfg.seed = stage_seed(iv_seed, "intervention");
      cfg.base.train.seed = stage_seed(iv_seed, "baseline");
      cfg.lfr.train.seed = cfg.seed;
      cfg.validate();
      const auto [tr, va] = train_val(iv_data, iv_manifest, iv_val, iv_seed);
      CandidateSet set = train_intervention(tr, va, cfg);
      const TrainedScorer& chosen = select_candidate(set, va, stage_seed(iv_seed, "select"));
      const fs::path dir(iv_out);
      fs::create_directories(dir);
      for (std::size_t c = 0; c < set.candidates.size(); ++c)
        set.candidates[c].scorer.write_file(dir / ("candidate_" + std::to_string(c) + ".json"));
      json sel = set.to_json();
      sel["config"] = cfg.to_json();
      write_json(dir / "selection.json", sel);
      chosen.write_file(dir / "selected.json");
    } else if (*rep) {
      const SfmDataset test = load(rp_data, rp_manifest);
      ReportConfig cfg;
      if (!rp_config.empty()) {
        cfg = ReportConfig::from_json(read_json(rp_config));
      } else {
        cfg.estimate.bootstrap = rp_bootstrap;
        cfg.metric_bootstrap = rp_metric_bootstrap;
        cfg.seed = rp_seed;
        cfg.estimate.seed = rp_seed;
        cfg.estimate.validate();
      }
      const auto rows = build_report(test, read_model_directory(rp_models), cfg);
      std::ostringstream csv;
      write_report_csv(rows, csv);
      write_text(rp_out, csv.str());
      if (!rp_plot.empty()) write_json(rp_plot, plot_data(rows));
      if (!rp_corr.empty()) {
        std::ostringstream corr;
        write_correlation_csv(rows, corr);
        write_text(rp_corr, corr.str());
      }
    } else if (*run) {
      PipelineConfig cfg = PipelineConfig::read_file(run_config);
      if (!run_out.empty()) cfg.output_dir = run_out;
      const PipelineResult r = run_pipeline(cfg);
      std::cout << "wrote " << r.artifacts.size() << " artifacts to " << r.output_dir.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "pathfair: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "pathfair: " << e.what() << "\n";
    return exit_code_for(ErrorKind::data);
  }
  return 0;
}

#pragma once

#include "pathfair/dimred.hpp"
#include "pathfair/effects.hpp"
#include "pathfair/interventions.hpp"
#include "pathfair/report.hpp"
#include "pathfair/scorer.hpp"
#include "pathfair/sfm_data.hpp"
#include "pathfair/synthgen.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace pathfair {

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "pathfair-out";

  std::optional<std::filesystem::path> csv;
  std::optional<std::filesystem::path> manifest;
  std::optional<ScmSpec> scm;
  Index n = 0;

  SplitSpec split;
  EstimateConfig estimate;
  ReductionMethod reduction = ReductionMethod::none;
  double keep_fraction = 1.0;
  DimredConfig dimred;
  BaselineConfig baseline;
  std::vector<InterventionConfig> interventions;
  ReportConfig report;

  nlohmann::json source;  // the validated document

  /// Validates against the published schema first; relative paths resolve
  /// against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig read_file(const std::filesystem::path& path);
};

/// Holds the test partition and refuses access until the report stage.
class PartitionGuard {
 public:
  explicit PartitionGuard(SfmDataset test) : test_(std::move(test)) {}
  void unlock_for_report() { unlocked_ = true; }
  bool unlocked() const { return unlocked_; }
  /// Throws ErrorKind::data while locked.
  const SfmDataset& test() const;

 private:
  SfmDataset test_;
  bool unlocked_ = false;
};

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string stage;
  std::string sha256;
};

struct PipelineResult {
  std::filesystem::path output_dir;
  std::vector<ArtifactRecord> artifacts;
  std::vector<TradeoffRow> report;
};

/// "007_<label>.json" with the label made file-system safe.
std::string model_file_name(std::size_t index, const std::string& label);

/// baseline.json first, then the remaining *.json files in name order.
std::vector<TrainedScorer> read_model_directory(const std::filesystem::path& dir);

/// load/synth, split, optional reduction, data effects, baseline, interventions,
/// report. Stage failures rethrow with the stage name; artifacts written so
/// far are kept.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace pathfair

#pragma once

#include "pathfair/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pathfair {

/// Binds CSV columns to the sensitive attribute X, confounders Z, mediators W
/// and outcome Y of a standard fairness model.
struct RoleManifest {
  std::string sensitive_column;
  std::string x0_label;
  std::string x1_label;
  std::string outcome_column;
  std::vector<std::string> confounder_columns;
  /// Subset of the confounders holding demographic information (dropped by
  /// demographic-unaware training). Healthcare-utilization counts stay out of it.
  std::vector<std::string> demographic_columns;
  std::vector<std::string> mediator_columns;
  /// Alternative to an explicit list: every header column starting with this.
  std::optional<std::string> mediator_prefix;

  /// Throws ErrorKind::manifest on overlapping roles or an empty mediator set.
  void validate() const;

  static RoleManifest from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static RoleManifest read_file(const std::filesystem::path& path);
};

enum class Provenance { real, synthetic };

/// Per-column affine map v -> (v - mean) / sd relative to the raw data.
struct Standardization {
  Vector z_mean, z_sd, w_mean, w_sd;

  std::string hash() const;
  nlohmann::json to_json() const;
  static Standardization from_json(const nlohmann::json& j);
};

struct SfmDataset {
  Vector x;  // 0/1
  Matrix z;
  Matrix w;
  Vector y;  // 0/1
  std::vector<std::string> z_names;
  std::vector<std::string> w_names;
  std::vector<bool> z_demographic;
  std::string sensitive_name = "x";
  std::string outcome_name = "y";
  std::string x0_label = "0";
  std::string x1_label = "1";
  std::optional<Standardization> standardization;
  Provenance provenance = Provenance::real;

  Index n() const { return x.size(); }
  Index dim_z() const { return z.cols(); }
  Index dim_w() const { return w.cols(); }

  /// Throws ErrorKind::data when shapes disagree, codes leave {0,1}, values are
  /// non-finite or an x group is empty.
  void validate() const;

  /// Hash of the mediator schema (count and names).
  std::string mediator_schema() const;

  /// Manifest that reproduces this dataset from `write_csv` output.
  RoleManifest manifest() const;
};

SfmDataset load_dataset(const std::filesystem::path& csv_path, const RoleManifest& manifest);
SfmDataset load_dataset(std::istream& csv, const RoleManifest& manifest);

/// Writes the dataset with its current (possibly standardized) values.
void write_csv(const SfmDataset& d, std::ostream& out);
void write_csv(const SfmDataset& d, const std::filesystem::path& path);

/// Standardizes Z and W with the population mean/sd of `reference`; sd below
/// 1e-12 is replaced by 1. Both datasets must be in the same standardization
/// state. The recorded parameters compose with any earlier standardization so
/// `unstandardize` always returns raw values.
SfmDataset standardize(const SfmDataset& d, const SfmDataset& reference);

/// Applies recorded parameters to a raw dataset; identity if `d` already
/// carries the same parameters.
SfmDataset apply_standardization(const SfmDataset& d, const Standardization& s);

SfmDataset unstandardize(const SfmDataset& d);

SfmDataset subset(const SfmDataset& d, std::span<const Index> rows);

enum class StratifyOn { outcome, outcome_sensitive };

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
  StratifyOn stratify_on = StratifyOn::outcome_sensitive;

  void validate() const;
};

struct SplitIndices {
  IndexList train, val, test;
  nlohmann::json to_json() const;
};

/// Stratified split. Global partition sizes equal round(fraction * n) for train
/// and train+val; every stratum gets floor or ceil of its share at both cut
/// points. Throws ErrorKind::infeasible_split when a partition lacks an outcome
/// class or an x group.
SplitIndices split_indices(const SfmDataset& d, const SplitSpec& spec);

struct Partitions {
  SfmDataset train, val, test;
  SplitIndices indices;
};

Partitions split(const SfmDataset& d, const SplitSpec& spec);

}  // namespace pathfair

#pragma once

#include "pathfair/common.hpp"
#include "pathfair/effects.hpp"
#include "pathfair/network.hpp"
#include "pathfair/sfm_data.hpp"
#include "pathfair/synthgen.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>

namespace pathfair {

enum class ReductionMethod { none, learn_x, learn_y_lasso, learn_y_pfi, learn_w_autoencoder };

std::string to_string(ReductionMethod m);
ReductionMethod reduction_method_from_string(const std::string& s);

struct ReductionPlan {
  ReductionMethod method = ReductionMethod::none;
  double keep_fraction = 1.0;
  IndexList selected;                     // selection methods, in rank order
  std::optional<Autoencoder> autoencoder; // learn_w
  Index input_dim = 0;
  std::string mediator_schema;
  std::string output_schema;              // schema of the reduced block
  std::string fit_provenance;             // hash of the data the plan was fit on
  std::vector<std::string> warnings;

  Index output_dim() const;
  nlohmann::json to_json() const;
  static ReductionPlan from_json(const nlohmann::json& j);
};

/// max(1, round(keep_fraction * dim_w)).
Index kept_count(Index dim_w, double keep_fraction);

/// Indices of the k largest values, ties by ascending index.
IndexList top_k(const Vector& values, Index k);

struct DimredConfig {
  double l2 = 1e-3;                 // outcome model for pfi
  TrainConfig train{.learning_rate = 1e-2, .epochs = 500, .batch_size = 256, .seed = 0,
                    .patience = 20, .class_weighting = false, .tolerance = 1e-6};
  int pfi_repeats = 5;
  double pfi_holdout = 0.2;
  int lasso_bisections = 20;
  TrainConfig autoencoder{.learning_rate = 1e-3, .epochs = 100, .batch_size = 128, .seed = 0,
                          .patience = 10, .class_weighting = false, .tolerance = 1e-8};
  AutoencoderOptions autoencoder_options;

  nlohmann::json to_json() const;
  static DimredConfig from_json(const nlohmann::json& j);
};

ReductionPlan plan_none(const SfmDataset& d);
/// Mediators ranked by |mean_1 - mean_0|.
ReductionPlan plan_learn_x(const SfmDataset& d, double keep_fraction);
/// lasso: |coefficient| of an L1 logistic fit of Y on W, penalty bisected until
/// at least k coefficients are nonzero. pfi: permutation importance of an
/// (X, Z, W) outcome model evaluated on a held-out slice.
ReductionPlan plan_learn_y(const SfmDataset& d, double keep_fraction, ReductionMethod backend,
                           const DimredConfig& config, std::uint64_t seed);
ReductionPlan plan_learn_w(const SfmDataset& d, double keep_fraction, const DimredConfig& config,
                           std::uint64_t seed);

ReductionPlan make_plan(ReductionMethod method, const SfmDataset& d, double keep_fraction,
                        const DimredConfig& config, std::uint64_t seed);

/// Replaces the mediator block; selection plans leave already-reduced data as
/// is. Throws ErrorKind::schema_mismatch when the plan was fit on a different
/// mediator schema.
SfmDataset apply(const ReductionPlan& plan, const SfmDataset& d);

struct BenchmarkGrid {
  std::vector<ScmSpec> worlds;
  std::vector<Index> n_values;
  std::vector<ReductionMethod> methods;  // "none" is always evaluated
  std::vector<double> fractions;
  int replicates = 10;
  std::uint64_t seed = 0;
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  LearnerConfig learner;
  DimredConfig dimred;

  void validate() const;
  nlohmann::json to_json() const;
  static BenchmarkGrid from_json(const nlohmann::json& j);
};

/// Raw estimates for one (world, n, replicate).
struct BenchmarkReplicate {
  Index dim_w = 0;
  Index n = 0;
  int replicate = 0;
  TrueEffects truth;
  std::vector<std::pair<std::string, double>> conditions;  // (method, fraction)
  std::vector<EffectTriple> estimates;                     // aligned with conditions
};

struct BenchmarkRow {
  Index dim_w = 0;
  Index n = 0;
  std::string method;
  double fraction = 1.0;
  std::string effect;
  double mean_pct_error = 0.0;  // NaN when no replicate has a defined error
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int defined_replicates = 0;
};

struct BenchmarkResult {
  std::vector<BenchmarkReplicate> replicates;
  std::vector<BenchmarkRow> rows;
};

/// Percent error |est - true| / |true| * 100; undefined when |true| < 1e-4.
std::optional<double> percent_error(double estimate, double truth);

BenchmarkResult benchmark_reduction(const BenchmarkGrid& grid);

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, std::ostream& out);

}  // namespace pathfair

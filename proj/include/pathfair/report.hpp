#pragma once

#include "pathfair/effects.hpp"
#include "pathfair/scorer.hpp"
#include "pathfair/sfm_data.hpp"

#include <json.hpp>

#include <optional>
#include <ostream>

namespace pathfair {

struct CorrelationRow {
  std::string experiment;
  std::string category;
  std::optional<double> r_true;  // null when either vector is constant
  std::optional<double> r_pred;  // absent for the data row
};

struct TradeoffRow {
  std::string experiment;
  std::optional<double> auroc;
  std::optional<Interval> auroc_ci;
  std::optional<double> brier;
  std::optional<Interval> brier_ci;
  EffectReport effects;
  std::vector<CorrelationRow> correlations;
};

struct ReportConfig {
  /// Estimator for model rows (target is forced to data for the data row).
  EstimateConfig estimate = [] {
    EstimateConfig c;
    c.target = TargetKind::model_hard_label;
    return c;
  }();
  int metric_bootstrap = 200;  // 0 skips metric intervals
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ReportConfig from_json(const nlohmann::json& j);
};

/// One "Data" row plus one row per scorer, all on `test`.
std::vector<TradeoffRow> build_report(const SfmDataset& test, const std::vector<TrainedScorer>& scorers,
                                      const ReportConfig& config);

void write_report_csv(const std::vector<TradeoffRow>& rows, std::ostream& out);
void write_correlation_csv(const std::vector<TradeoffRow>& rows, std::ostream& out);

/// Per target path: (experiment, effect with interval, auroc with interval).
nlohmann::json plot_data(const std::vector<TradeoffRow>& rows);

}  // namespace pathfair

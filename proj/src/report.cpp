#include "pathfair/report.hpp"

#include "pathfair/csv.hpp"
#include "pathfair/metrics.hpp"

namespace pathfair {

using nlohmann::json;

json ReportConfig::to_json() const {
  return {{"estimate", estimate.to_json()}, {"metric_bootstrap", metric_bootstrap}, {"seed", seed}};
}

ReportConfig ReportConfig::from_json(const json& j) {
  ReportConfig c;
  if (j.contains("estimate")) c.estimate = EstimateConfig::from_json(j.at("estimate"));
  c.metric_bootstrap = j.value("metric_bootstrap", c.metric_bootstrap);
  c.seed = j.value("seed", c.seed);
  if (c.metric_bootstrap != 0 && c.metric_bootstrap < 50)
    throw Error(ErrorKind::config, "metric_bootstrap must be 0 or at least 50");
  return c;
}

namespace {

std::vector<CorrelationRow> correlations(const SfmDataset& d, const std::string& experiment,
                                         const Vector* predicted) {
  std::vector<CorrelationRow> rows;
  const Vector ones = Vector::Ones(d.n());
  for (int cat = 1; cat >= 0; --cat) {
    const Vector indicator = cat == 1 ? d.x : Vector(ones - d.x);
    CorrelationRow r;
    r.experiment = experiment;
    r.category = cat == 1 ? d.x1_label : d.x0_label;
    r.r_true = pearson(indicator, d.y);
    if (predicted) r.r_pred = pearson(indicator, *predicted);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

std::vector<TradeoffRow> build_report(const SfmDataset& test, const std::vector<TrainedScorer>& scorers,
                                      const ReportConfig& config) {
  for (const auto& s : scorers)
    if (s.dim_z != test.dim_z() || s.dim_w != test.dim_w())
      throw Error(ErrorKind::schema_mismatch, "scorer '" + s.tag + "' does not match the test schema");

  std::vector<TradeoffRow> rows;
  {
    TradeoffRow data;
    data.experiment = "Data";
    EstimateConfig ec = config.estimate;
    ec.target = TargetKind::data_outcome;
    if (ec.estimator == EstimatorKind::direct_counterfactual) ec.estimator = EstimatorKind::doubly_robust;
    ec.seed = stage_seed(config.seed, "Data");
    data.effects = estimate_effects(test, ec);
    data.correlations = correlations(test, data.experiment, nullptr);
    rows.push_back(std::move(data));
  }

  for (const auto& s : scorers) {
    TradeoffRow row;
    row.experiment = s.tag;
    const Vector scores = score(s, test);
    const Vector hard = harden(s, scores);
    row.auroc = auroc(scores, test.y);
    row.brier = brier(scores, test.y);
    if (config.metric_bootstrap > 0) {
      const auto iv = bootstrap_intervals(
          test.n(),
          [&](std::span<const Index> idx) {
            const Vector sc = take(scores, idx), lb = take(test.y, idx);
            Vector v(2);
            v << auroc(sc, lb), brier(sc, lb);
            return v;
          },
          config.metric_bootstrap, stage_seed(config.seed, "metrics:" + s.tag));
      row.auroc_ci = iv[0];
      row.brier_ci = iv[1];
    }
    EstimateConfig ec = config.estimate;
    if (ec.target == TargetKind::data_outcome) ec.target = TargetKind::model_hard_label;
    ec.seed = stage_seed(config.seed, s.tag);
    row.effects = estimate_effects(test, ec, &s);
    row.correlations = correlations(test, row.experiment, &hard);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void write_point_ci(std::ostream& out, const std::optional<double>& point, const std::optional<Interval>& ci) {
  out << ',' << cell(point) << ',' << (ci ? format_double(ci->lo) : "") << ','
      << (ci ? format_double(ci->hi) : "");
}

}  // namespace

void write_report_csv(const std::vector<TradeoffRow>& rows, std::ostream& out) {
  out << "experiment,auroc,auroc_lo,auroc_hi,brier,brier_lo,brier_hi,te,te_lo,te_hi,nde,nde_lo,nde_hi,"
         "nie,nie_lo,nie_hi,se,se_lo,se_hi\n";
  for (const auto& r : rows) {
    out << csv::escape(r.experiment);
    write_point_ci(out, r.auroc, r.auroc_ci);
    write_point_ci(out, r.brier, r.brier_ci);
    const EffectTriple& e = r.effects.point;
    const double values[] = {e.te, e.nde, e.nie, e.se};
    for (std::size_t k = 0; k < 4; ++k) {
      std::optional<Interval> ci;
      if (r.effects.ci) ci = (*r.effects.ci)[k];
      write_point_ci(out, values[k], ci);
    }
    out << '\n';
  }
}

void write_correlation_csv(const std::vector<TradeoffRow>& rows, std::ostream& out) {
  out << "experiment,category,r_true,r_pred\n";
  for (const auto& r : rows)
    for (const auto& c : r.correlations)
      out << csv::escape(c.experiment) << ',' << csv::escape(c.category) << ',' << cell(c.r_true) << ','
          << cell(c.r_pred) << '\n';
}

json plot_data(const std::vector<TradeoffRow>& rows) {
  json out;
  const char* names[] = {"te", "nde", "nie", "se"};
  for (std::size_t k = 0; k < 4; ++k) {
    json points = json::array();
    for (const auto& r : rows) {
      if (!r.auroc) continue;
      const EffectTriple& e = r.effects.point;
      const double v = k == 0 ? e.te : k == 1 ? e.nde : k == 2 ? e.nie : e.se;
      json p{{"experiment", r.experiment}, {"effect", v}, {"auroc", *r.auroc}};
      if (r.effects.ci) p["effect_ci"] = {(*r.effects.ci)[k].lo, (*r.effects.ci)[k].hi};
      if (r.auroc_ci) p["auroc_ci"] = {r.auroc_ci->lo, r.auroc_ci->hi};
      points.push_back(p);
    }
    json ref = nullptr;
    if (!rows.empty() && rows.front().experiment == "Data") {
      const EffectTriple& e = rows.front().effects.point;
      ref = k == 0 ? e.te : k == 1 ? e.nde : k == 2 ? e.nie : e.se;
    }
    out[names[k]] = {{"x", "effect"}, {"y", "auroc"}, {"data_effect", ref}, {"points", points}};
  }
  return out;
}

}  // namespace pathfair

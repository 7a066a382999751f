#include "pathfair/dimred.hpp"

#include "pathfair/importance.hpp"
#include "pathfair/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pathfair {

using nlohmann::json;

std::string to_string(ReductionMethod m) {
  switch (m) {
    case ReductionMethod::none: return "none";
    case ReductionMethod::learn_x: return "learn_x";
    case ReductionMethod::learn_y_lasso: return "learn_y_lasso";
    case ReductionMethod::learn_y_pfi: return "learn_y_pfi";
    case ReductionMethod::learn_w_autoencoder: return "learn_w_autoencoder";
  }
  return "none";
}

ReductionMethod reduction_method_from_string(const std::string& s) {
  for (auto m : {ReductionMethod::none, ReductionMethod::learn_x, ReductionMethod::learn_y_lasso,
                 ReductionMethod::learn_y_pfi, ReductionMethod::learn_w_autoencoder})
    if (to_string(m) == s) return m;
  if (s == "learn_w") return ReductionMethod::learn_w_autoencoder;
  throw Error(ErrorKind::config, "unknown reduction method '" + s + "'");
}

Index ReductionPlan::output_dim() const {
  if (method == ReductionMethod::none) return input_dim;
  if (autoencoder) return autoencoder->latent_dim;
  return static_cast<Index>(selected.size());
}

json ReductionPlan::to_json() const {
  json j{{"method", to_string(method)},
         {"keep_fraction", keep_fraction},
         {"selected", selected},
         {"input_dim", input_dim},
         {"mediator_schema", mediator_schema},
         {"output_schema", output_schema},
         {"fit_provenance", fit_provenance},
         {"warnings", warnings}};
  if (autoencoder) j["autoencoder"] = autoencoder->to_json();
  return j;
}

ReductionPlan ReductionPlan::from_json(const json& j) {
  try {
    ReductionPlan p;
    p.method = reduction_method_from_string(j.at("method").get<std::string>());
    p.keep_fraction = j.at("keep_fraction").get<double>();
    p.selected = j.at("selected").get<IndexList>();
    p.input_dim = j.at("input_dim").get<Index>();
    p.mediator_schema = j.at("mediator_schema").get<std::string>();
    p.output_schema = j.value("output_schema", std::string());
    p.fit_provenance = j.value("fit_provenance", std::string());
    p.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("autoencoder")) p.autoencoder = Autoencoder::from_json(j.at("autoencoder"));
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("malformed reduction plan: ") + e.what());
  }
}

Index kept_count(Index dim_w, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw Error(ErrorKind::config, "keep_fraction must lie in (0, 1]");
  return std::max<Index>(1, static_cast<Index>(std::llround(keep_fraction * static_cast<double>(dim_w))));
}

IndexList top_k(const Vector& values, Index k) {
  IndexList order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });
  order.resize(static_cast<std::size_t>(std::min<Index>(k, values.size())));
  return order;
}

json DimredConfig::to_json() const {
  return {{"l2", l2},
          {"train", train.to_json()},
          {"pfi_repeats", pfi_repeats},
          {"pfi_holdout", pfi_holdout},
          {"lasso_bisections", lasso_bisections},
          {"autoencoder", autoencoder.to_json()},
          {"autoencoder_hidden", autoencoder_options.hidden_width},
          {"autoencoder_activation", to_string(autoencoder_options.activation)}};
}

DimredConfig DimredConfig::from_json(const json& j) {
  DimredConfig c;
  c.l2 = j.value("l2", c.l2);
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  c.pfi_repeats = j.value("pfi_repeats", c.pfi_repeats);
  c.pfi_holdout = j.value("pfi_holdout", c.pfi_holdout);
  c.lasso_bisections = j.value("lasso_bisections", c.lasso_bisections);
  if (j.contains("autoencoder")) c.autoencoder = TrainConfig::from_json(j.at("autoencoder"));
  c.autoencoder_options.hidden_width = j.value("autoencoder_hidden", c.autoencoder_options.hidden_width);
  if (j.contains("autoencoder_activation"))
    c.autoencoder_options.activation =
        activation_from_string(j.at("autoencoder_activation").get<std::string>());
  if (c.pfi_repeats < 1) throw Error(ErrorKind::config, "pfi_repeats must be >= 1");
  if (!(c.pfi_holdout > 0.0 && c.pfi_holdout < 1.0))
    throw Error(ErrorKind::config, "pfi_holdout must lie in (0, 1)");
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::string data_fingerprint(const SfmDataset& d) {
  std::string bytes;
  auto append = [&](const double* p, Index count) {
    bytes.append(reinterpret_cast<const char*>(p), static_cast<std::size_t>(count) * sizeof(double));
  };
  append(d.x.data(), d.x.size());
  append(d.z.data(), d.z.size());
  append(d.w.data(), d.w.size());
  append(d.y.data(), d.y.size());
  return sha256_hex(bytes);
}

ReductionPlan base_plan(ReductionMethod method, const SfmDataset& d, double keep_fraction) {
  ReductionPlan p;
  p.method = method;
  p.keep_fraction = keep_fraction;
  p.input_dim = d.dim_w();
  p.mediator_schema = d.mediator_schema();
  p.fit_provenance = data_fingerprint(d);
  return p;
}

IndexList identity(Index n) {
  IndexList v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

void require_both_groups(const SfmDataset& d) {
  const double ones = d.x.sum();
  if (ones == 0.0 || ones == static_cast<double>(d.n()))
    throw Error(ErrorKind::data, "both x groups must be present");
}

void require_both_classes(const SfmDataset& d) {
  const double ones = d.y.sum();
  if (ones == 0.0 || ones == static_cast<double>(d.n()))
    throw Error(ErrorKind::data, "outcome must contain both classes");
}

/// Records the mediator schema the plan produces.
ReductionPlan seal(ReductionPlan p, const SfmDataset& d) {
  SfmDataset shape;
  if (p.autoencoder) {
    shape.w = Matrix(0, p.autoencoder->latent_dim);
    for (Index j = 0; j < p.autoencoder->latent_dim; ++j) shape.w_names.push_back("latent" + std::to_string(j + 1));
  } else {
    shape.w = Matrix(0, static_cast<Index>(p.selected.size()));
    for (Index j : p.selected) shape.w_names.push_back(d.w_names[static_cast<std::size_t>(j)]);
  }
  p.output_schema = shape.mediator_schema();
  return p;
}

Index count_nonzero(const Vector& v) { return (v.array() != 0.0).count(); }

}  // namespace

ReductionPlan plan_none(const SfmDataset& d) {
  ReductionPlan p = base_plan(ReductionMethod::none, d, 1.0);
  p.selected = identity(d.dim_w());
  return seal(std::move(p), d);
}

ReductionPlan plan_learn_x(const SfmDataset& d, double keep_fraction) {
  require_both_groups(d);
  ReductionPlan p = base_plan(ReductionMethod::learn_x, d, keep_fraction);
  const Index k = kept_count(d.dim_w(), keep_fraction);
  if (k == d.dim_w()) {
    p.selected = identity(d.dim_w());
    return seal(std::move(p), d);
  }
  Vector diff(d.dim_w());
  const double n1 = d.x.sum(), n0 = static_cast<double>(d.n()) - n1;
  for (Index j = 0; j < d.dim_w(); ++j) {
    double s1 = 0, s0 = 0;
    for (Index i = 0; i < d.n(); ++i) (d.x(i) == 1.0 ? s1 : s0) += d.w(i, j);
    diff(j) = std::abs(s1 / n1 - s0 / n0);
  }
  p.selected = top_k(diff, k);
  return seal(std::move(p), d);
}

ReductionPlan plan_learn_y(const SfmDataset& d, double keep_fraction, ReductionMethod backend,
                           const DimredConfig& config, std::uint64_t seed) {
  require_both_classes(d);
  ReductionPlan p = base_plan(backend, d, keep_fraction);
  const Index k = kept_count(d.dim_w(), keep_fraction);
  if (k == d.dim_w()) {
    p.selected = identity(d.dim_w());
    return seal(std::move(p), d);
  }
  TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, 0x1a);

  if (backend == ReductionMethod::learn_y_lasso) {
    const Matrix w = standardize_columns(d.w);
    const double ybar = d.y.mean();
    const double lambda_max = (w.transpose() * (Vector::Constant(d.n(), ybar) - d.y)).cwiseAbs().maxCoeff() /
                              static_cast<double>(d.n());
    double lo = std::max(lambda_max, 1e-12) * 1e-4;
    double hi = std::max(lambda_max, 1e-12);
    LinearModel best = fit_logistic(w, d.y, tc, lo, 0.0);
    if (count_nonzero(best.weights) < k) {
      p.warnings.push_back("lasso path reached only " + std::to_string(count_nonzero(best.weights)) +
                           " nonzero coefficients; using the smallest penalty");
    } else {
      for (int it = 0; it < config.lasso_bisections; ++it) {
        const double mid = std::sqrt(lo * hi);
        LinearModel m = fit_logistic(w, d.y, tc, mid, 0.0);
        if (count_nonzero(m.weights) >= k) {
          lo = mid;
          best = std::move(m);
        } else {
          hi = mid;
        }
      }
    }
    p.selected = top_k(best.weights.cwiseAbs(), k);
    return seal(std::move(p), d);
  }
  if (backend != ReductionMethod::learn_y_pfi)
    throw Error(ErrorKind::config, "plan_learn_y backend must be lasso or pfi");

  // Outcome model on (X, Z, W); importance of W columns on a held-out slice.
  Matrix f(d.n(), 1 + d.dim_z() + d.dim_w());
  f << d.x, d.z, d.w;
  f = standardize_columns(f);
  IndexList perm = identity(d.n());
  Rng rng = make_rng(seed, 0x9f1);
  shuffle(perm, rng);
  const auto n_hold = static_cast<std::size_t>(
      std::max<double>(1.0, std::round(config.pfi_holdout * static_cast<double>(d.n()))));
  IndexList hold(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  IndexList fit(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::sort(hold.begin(), hold.end());
  std::sort(fit.begin(), fit.end());
  const LinearModel model = fit_logistic(take_rows(f, fit), take(d.y, fit), tc, 0.0, config.l2);

  IndexList wcols(static_cast<std::size_t>(d.dim_w()));
  std::iota(wcols.begin(), wcols.end(), 1 + d.dim_z());
  const Vector imp = permutation_importance([&](const Matrix& m) { return model.predict_proba(m); },
                                            take_rows(f, hold), take(d.y, hold),
                                            ImportanceMetric::neg_bce, config.pfi_repeats,
                                            derive_seed(seed, 0x9f2), wcols);
  p.selected = top_k(imp, k);
  return seal(std::move(p), d);
}

ReductionPlan plan_learn_w(const SfmDataset& d, double keep_fraction, const DimredConfig& config,
                           std::uint64_t seed) {
  ReductionPlan p = base_plan(ReductionMethod::learn_w_autoencoder, d, keep_fraction);
  const Index k = kept_count(d.dim_w(), keep_fraction);
  TrainConfig tc = config.autoencoder;
  tc.seed = derive_seed(seed, 0xae);
  p.autoencoder = fit_autoencoder(d.w, k, tc, config.autoencoder_options);
  return seal(std::move(p), d);
}

ReductionPlan make_plan(ReductionMethod method, const SfmDataset& d, double keep_fraction,
                        const DimredConfig& config, std::uint64_t seed) {
  switch (method) {
    case ReductionMethod::none: return plan_none(d);
    case ReductionMethod::learn_x: return plan_learn_x(d, keep_fraction);
    case ReductionMethod::learn_y_lasso:
    case ReductionMethod::learn_y_pfi: return plan_learn_y(d, keep_fraction, method, config, seed);
    case ReductionMethod::learn_w_autoencoder: return plan_learn_w(d, keep_fraction, config, seed);
  }
  return plan_none(d);
}

SfmDataset apply(const ReductionPlan& plan, const SfmDataset& d) {
  if (plan.method == ReductionMethod::none) return d;
  if (!plan.autoencoder && !plan.output_schema.empty() && d.mediator_schema() == plan.output_schema) return d;
  if (d.dim_w() != plan.input_dim || d.mediator_schema() != plan.mediator_schema)
    throw Error(ErrorKind::schema_mismatch, "reduction plan was fit on a different mediator schema");
  SfmDataset out = d;
  if (plan.autoencoder) {
    out.w = plan.autoencoder->encode(d.w);
    out.w_names.clear();
    for (Index j = 0; j < out.w.cols(); ++j) out.w_names.push_back("latent" + std::to_string(j + 1));
  } else {
    out.w = take_cols(d.w, plan.selected);
    out.w_names.clear();
    for (Index j : plan.selected) out.w_names.push_back(d.w_names[static_cast<std::size_t>(j)]);
  }
  // The reduced block no longer matches the recorded mediator standardization.
  if (out.standardization) {
    Standardization s = *out.standardization;
    if (plan.autoencoder) {
      s.w_mean = Vector::Zero(out.w.cols());
      s.w_sd = Vector::Ones(out.w.cols());
    } else {
      s.w_mean = take(s.w_mean, plan.selected);
      s.w_sd = take(s.w_sd, plan.selected);
    }
    out.standardization = s;
  }
  return out;
}

// ---------------------------------------------------------------------------

void BenchmarkGrid::validate() const {
  if (worlds.empty() || n_values.empty())
    throw Error(ErrorKind::config, "benchmark grid needs worlds and n values");
  if (replicates < 1) throw Error(ErrorKind::config, "benchmark replicates must be >= 1");
  for (double f : fractions) kept_count(1, f);
  for (const auto& w : worlds) w.validate();
  learner.validate();
}

json BenchmarkGrid::to_json() const {
  json w = json::array();
  for (const auto& s : worlds) w.push_back(s.to_json());
  std::vector<std::string> m;
  for (auto x : methods) m.push_back(to_string(x));
  return {{"worlds", w},         {"n", n_values},
          {"methods", m},        {"fractions", fractions},
          {"replicates", replicates}, {"seed", seed},
          {"estimator", to_string(estimator)}, {"learner", learner.to_json()},
          {"dimred", dimred.to_json()}};
}

BenchmarkGrid BenchmarkGrid::from_json(const json& j) {
  try {
    BenchmarkGrid g;
    for (const auto& w : j.at("worlds")) g.worlds.push_back(ScmSpec::from_json(w));
    g.n_values = j.at("n").get<std::vector<Index>>();
    for (const auto& m : j.value("methods", std::vector<std::string>{"learn_x", "learn_y_lasso",
                                                                     "learn_y_pfi", "learn_w_autoencoder"}))
      g.methods.push_back(reduction_method_from_string(m));
    g.fractions = j.value("fractions", std::vector<double>{0.2, 0.4, 0.5, 0.6, 0.8});
    g.replicates = j.value("replicates", g.replicates);
    g.seed = j.value("seed", g.seed);
    if (j.contains("estimator"))
      g.estimator = estimator_kind_from_string(j.at("estimator").get<std::string>());
    if (j.contains("learner")) g.learner = LearnerConfig::from_json(j.at("learner"));
    if (j.contains("dimred")) g.dimred = DimredConfig::from_json(j.at("dimred"));
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid benchmark grid: ") + e.what());
  }
}

std::optional<double> percent_error(double estimate, double truth) {
  if (std::abs(truth) < 1e-4) return std::nullopt;
  return std::abs(estimate - truth) / std::abs(truth) * 100.0;
}

namespace {

EffectTriple point_effects(const SfmDataset& d, const BenchmarkGrid& grid, std::uint64_t seed) {
  EstimateConfig ec;
  ec.target = TargetKind::data_outcome;
  ec.estimator = grid.estimator;
  ec.learner = grid.learner;
  ec.bootstrap = 0;
  ec.seed = seed;
  return estimate_effects(d, ec).point;
}

}  // namespace

BenchmarkResult benchmark_reduction(const BenchmarkGrid& grid) {
  grid.validate();
  if (grid.estimator == EstimatorKind::direct_counterfactual)
    throw Error(ErrorKind::config, "benchmark estimates data effects; use dr or plugin");

  struct Job {
    std::size_t world, nidx;
    int rep;
  };
  std::vector<Job> jobs;
  for (std::size_t w = 0; w < grid.worlds.size(); ++w)
    for (std::size_t ni = 0; ni < grid.n_values.size(); ++ni)
      for (int r = 0; r < grid.replicates; ++r) jobs.push_back({w, ni, r});

  BenchmarkResult result;
  result.replicates.resize(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::uint64_t cell_seed = derive_seed(grid.seed, job.world * 1000003ULL + job.nidx,
                                                static_cast<std::uint64_t>(job.rep));
    ScmSpec spec = grid.worlds[job.world];
    spec.seed = derive_seed(cell_seed, 0x5c);
    const ScmWorld world = init_scm(spec);
    const CounterfactualPanel panel = sample_panel(world, grid.n_values[job.nidx], 1);
    const SfmDataset d = observational_dataset(panel);

    BenchmarkReplicate& out = result.replicates[j];
    out.dim_w = spec.dim_w;
    out.n = grid.n_values[job.nidx];
    out.replicate = job.rep;
    out.truth = true_effects(panel, spec.truth_source);

    const std::uint64_t est_seed = derive_seed(cell_seed, 0xe57);
    out.conditions.emplace_back("none", 1.0);
    out.estimates.push_back(point_effects(d, grid, est_seed));
    for (ReductionMethod m : grid.methods) {
      if (m == ReductionMethod::none) continue;
      for (double f : grid.fractions) {
        const ReductionPlan plan = make_plan(m, d, f, grid.dimred, derive_seed(cell_seed, 0xd1));
        out.conditions.emplace_back(to_string(m), f);
        out.estimates.push_back(point_effects(apply(plan, d), grid, est_seed));
      }
    }
  });

  // Aggregate per (world, n, condition, effect) over replicates.
  const char* effect_names[] = {"te", "nde", "nie", "se"};
  auto effect_value = [](const EffectTriple& t, int e) {
    return e == 0 ? t.te : e == 1 ? t.nde : e == 2 ? t.nie : t.se;
  };
  std::size_t j0 = 0;
  for (std::size_t w = 0; w < grid.worlds.size(); ++w) {
    for (std::size_t ni = 0; ni < grid.n_values.size(); ++ni) {
      const auto first = j0;
      j0 += static_cast<std::size_t>(grid.replicates);
      const auto& conds = result.replicates[first].conditions;
      for (std::size_t c = 0; c < conds.size(); ++c) {
        for (int e = 0; e < 4; ++e) {
          std::vector<double> errs;
          for (std::size_t r = first; r < j0; ++r) {
            const auto& rep = result.replicates[r];
            if (auto pe = percent_error(effect_value(rep.estimates[c], e), effect_value(rep.truth.effects, e)))
              errs.push_back(*pe);
          }
          BenchmarkRow row;
          row.dim_w = grid.worlds[w].dim_w;
          row.n = grid.n_values[ni];
          row.method = conds[c].first;
          row.fraction = conds[c].second;
          row.effect = effect_names[e];
          row.defined_replicates = static_cast<int>(errs.size());
          if (errs.empty()) {
            row.mean_pct_error = row.ci_lo = row.ci_hi = std::numeric_limits<double>::quiet_NaN();
          } else {
            row.mean_pct_error = mean(errs);
            row.ci_lo = quantile(errs, 0.025);
            row.ci_hi = quantile(errs, 0.975);
          }
          result.rows.push_back(row);
        }
      }
    }
  }
  return result;
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, std::ostream& out) {
  out << "dim_w,n,method,fraction,effect,mean_pct_error,ci_lo,ci_hi\n";
  for (const auto& r : rows)
    out << r.dim_w << ',' << r.n << ',' << r.method << ',' << format_double(r.fraction) << ','
        << r.effect << ',' << format_double(r.mean_pct_error) << ',' << format_double(r.ci_lo) << ','
        << format_double(r.ci_hi) << '\n';
}

}  // namespace pathfair

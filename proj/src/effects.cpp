#include "pathfair/effects.hpp"

#include "pathfair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pathfair {

using nlohmann::json;

std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::data_outcome: return "data";
    case TargetKind::model_hard_label: return "model";
    case TargetKind::model_score: return "model_score";
  }
  return "data";
}

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::plugin: return "plugin";
    case EstimatorKind::doubly_robust: return "dr";
    case EstimatorKind::direct_counterfactual: return "direct_counterfactual";
  }
  return "dr";
}

TargetKind target_kind_from_string(const std::string& s) {
  if (s == "data" || s == "data_outcome") return TargetKind::data_outcome;
  if (s == "model" || s == "model_hard_label") return TargetKind::model_hard_label;
  if (s == "model_score") return TargetKind::model_score;
  throw Error(ErrorKind::config, "unknown target '" + s + "' (data, model, model_score)");
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "plugin") return EstimatorKind::plugin;
  if (s == "dr" || s == "doubly_robust") return EstimatorKind::doubly_robust;
  if (s == "direct_counterfactual" || s == "direct") return EstimatorKind::direct_counterfactual;
  throw Error(ErrorKind::config, "unknown estimator '" + s + "' (plugin, dr, direct_counterfactual)");
}

// ---------------------------------------------------------------------------

void LearnerConfig::validate() const {
  train.validate();
  if (k_folds < 2) throw Error(ErrorKind::config, "k_folds must be at least 2");
  if (!(clip > 0.0 && clip < 0.5)) throw Error(ErrorKind::config, "clip must lie in (0, 0.5)");
  if (l2 < 0) throw Error(ErrorKind::config, "learner l2 must be >= 0");
}

json LearnerConfig::to_json() const {
  return {{"kind", kind == NuisanceLearner::logistic ? "logistic" : "mlp"},
          {"train", train.to_json()},
          {"l2", l2},
          {"mlp_hidden", mlp.hidden},
          {"mlp_l2", mlp.l2},
          {"k_folds", k_folds},
          {"clip", clip}};
}

LearnerConfig LearnerConfig::from_json(const json& j) {
  LearnerConfig c;
  const auto kind = j.value("kind", std::string("logistic"));
  if (kind == "logistic") c.kind = NuisanceLearner::logistic;
  else if (kind == "mlp") c.kind = NuisanceLearner::mlp;
  else throw Error(ErrorKind::config, "unknown nuisance learner '" + kind + "'");
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  c.l2 = j.value("l2", c.l2);
  if (j.contains("mlp_hidden")) c.mlp.hidden = j.at("mlp_hidden").get<std::vector<Index>>();
  c.mlp.l2 = j.value("mlp_l2", c.mlp.l2);
  c.k_folds = j.value("k_folds", c.k_folds);
  c.clip = j.value("clip", c.clip);
  c.validate();
  return c;
}

json NuisanceSet::diagnostics(const Vector& x) const {
  json j;
  Index clipped = 0;
  for (Index i = 0; i < n(); ++i) {
    if (e(i) <= clip || e(i) >= 1.0 - clip) ++clipped;
    if (g(i) <= clip || g(i) >= 1.0 - clip) ++clipped;
  }
  j["clip_rate"] = n() > 0 ? static_cast<double>(clipped) / static_cast<double>(2 * n()) : 0.0;
  try {
    j["propensity_auroc"] = auroc(e, x);
    j["mediated_propensity_auroc"] = auroc(g, x);
  } catch (const Error&) {
    j["propensity_auroc"] = nullptr;
    j["mediated_propensity_auroc"] = nullptr;
  }
  j["k_folds"] = k_folds;
  j["clip"] = clip;
  return j;
}

// ---------------------------------------------------------------------------

IndexList assign_folds(Index n, int k_folds, std::uint64_t seed) {
  IndexList perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng = make_rng(seed, 0xf01d);
  shuffle(perm, rng);
  IndexList fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i)
    fold[static_cast<std::size_t>(perm[i])] = static_cast<Index>(i % static_cast<std::size_t>(k_folds));
  return fold;
}

namespace {

using ProbModel = std::function<Vector(const Matrix&)>;

ProbModel fit_prob(const Matrix& features, const Vector& target, const IndexList& rows,
                   const LearnerConfig& cfg, std::uint64_t seed) {
  if (rows.empty()) throw Error(ErrorKind::estimation, "nuisance fit on an empty group");
  const Vector t = take(target, rows);
  if (t.maxCoeff() == t.minCoeff()) {
    const double c = t(0);
    return [c](const Matrix& f) { return Vector::Constant(f.rows(), c); };
  }
  const Matrix f = take_rows(features, rows);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  if (cfg.kind == NuisanceLearner::logistic) {
    LinearModel m = fit_logistic(f, t, tc, 0.0, cfg.l2);
    return [m = std::move(m)](const Matrix& x) { return m.predict_proba(x); };
  }
  MlpModel m = fit_mlp(f, t, cfg.mlp, tc);
  return [m = std::move(m)](const Matrix& x) { return m.predict_proba(x); };
}

void scatter(Vector& dst, const IndexList& rows, const Vector& values) {
  for (std::size_t i = 0; i < rows.size(); ++i) dst(rows[i]) = values(static_cast<Index>(i));
}

}  // namespace

NuisanceSet fit_nuisances(const SfmDataset& d, const Vector& target, const LearnerConfig& config,
                          std::uint64_t seed) {
  config.validate();
  const Index n = d.n();
  if (target.size() != n) throw Error(ErrorKind::estimation, "target length does not match data");
  if (!target.allFinite() || target.minCoeff() < 0.0 || target.maxCoeff() > 1.0)
    throw Error(ErrorKind::estimation, "target must lie in [0, 1]");

  NuisanceSet nu;
  nu.k_folds = config.k_folds;
  nu.clip = config.clip;
  nu.fold = assign_folds(n, config.k_folds, derive_seed(seed, 0xf0));
  nu.weight = Vector::Ones(n);

  const int K = config.k_folds;
  std::vector<IndexList> test(static_cast<std::size_t>(K)), train(static_cast<std::size_t>(K));
  std::vector<std::array<IndexList, 2>> train_by_x(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    std::array<Index, 2> in_fold{0, 0};
    for (Index i = 0; i < n; ++i) {
      const int xi = d.x(i) == 1.0 ? 1 : 0;
      if (nu.fold[static_cast<std::size_t>(i)] == k) {
        test[static_cast<std::size_t>(k)].push_back(i);
        ++in_fold[static_cast<std::size_t>(xi)];
      } else {
        train[static_cast<std::size_t>(k)].push_back(i);
        train_by_x[static_cast<std::size_t>(k)][static_cast<std::size_t>(xi)].push_back(i);
      }
    }
    if (in_fold[0] == 0 || in_fold[1] == 0 || train_by_x[static_cast<std::size_t>(k)][0].empty() ||
        train_by_x[static_cast<std::size_t>(k)][1].empty())
      throw Error(ErrorKind::estimation, "cross-fitting fold " + std::to_string(k) + " lacks an x group");
  }

  Matrix zw(n, d.dim_z() + d.dim_w());
  zw << d.z, d.w;
  zw = standardize_columns(zw);
  const Matrix zs = zw.leftCols(d.dim_z());

  nu.e = Vector(n);
  nu.g = Vector(n);
  nu.mu[0] = Vector(n);
  nu.mu[1] = Vector(n);
  for (auto& row : nu.eta)
    for (auto& v : row) v = Vector(n);

  // Stage 1: propensities and outcome regressions.
  parallel_for(static_cast<std::size_t>(K) * 4, [&](std::size_t job) {
    const auto k = job / 4;
    const auto which = job % 4;
    const std::uint64_t s = derive_seed(seed, k, which);
    const Matrix zt = take_rows(zs, test[k]);
    const Matrix zwt = take_rows(zw, test[k]);
    switch (which) {
      case 0: scatter(nu.e, test[k], fit_prob(zs, d.x, train[k], config, s)(zt)); break;
      case 1: scatter(nu.g, test[k], fit_prob(zw, d.x, train[k], config, s)(zwt)); break;
      default: {
        const int a = static_cast<int>(which) - 2;
        scatter(nu.mu[static_cast<std::size_t>(a)], test[k],
                fit_prob(zw, target, train_by_x[k][static_cast<std::size_t>(a)], config, s)(zwt));
      }
    }
  });

  // Stage 2: nested regressions on Z.
  parallel_for(static_cast<std::size_t>(K) * 4, [&](std::size_t job) {
    const auto k = job / 4;
    const int b = static_cast<int>(job % 4) / 2;
    const int a = static_cast<int>(job % 2);
    const std::uint64_t s = derive_seed(seed, k, 4 + job % 4);
    const Matrix zt = take_rows(zs, test[k]);
    const Vector& t = a == b ? target : nu.mu[static_cast<std::size_t>(a)];
    scatter(nu.eta[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)], test[k],
            fit_prob(zs, t, train_by_x[k][static_cast<std::size_t>(b)], config, s)(zt));
  });

  nu.e = nu.e.unaryExpr([c = config.clip](double v) { return clip(v, c, 1.0 - c); });
  nu.g = nu.g.unaryExpr([c = config.clip](double v) { return clip(v, c, 1.0 - c); });
  return nu;
}

// ---------------------------------------------------------------------------

Vector dr_pseudo_outcomes(const Vector& x, const Vector& target, const NuisanceSet& nu, int a,
                          int b) {
  const Index n = x.size();
  if (target.size() != n || nu.n() != n)
    throw Error(ErrorKind::estimation, "nuisance set does not match the data");
  const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
  Vector psi(n);
  for (Index i = 0; i < n; ++i) {
    const double p1_z = nu.e(i), p1_zw = nu.g(i);
    const double pa_z = a ? p1_z : 1.0 - p1_z;
    const double pb_z = b ? p1_z : 1.0 - p1_z;
    const double pa_zw = a ? p1_zw : 1.0 - p1_zw;
    const double pb_zw = b ? p1_zw : 1.0 - p1_zw;
    const double in_a = x(i) == static_cast<double>(a) ? 1.0 : 0.0;
    const double in_b = x(i) == static_cast<double>(b) ? 1.0 : 0.0;
    const double eta = nu.eta[ub][ua](i);
    if (a == b) {
      psi(i) = in_a / pa_z * (target(i) - eta) + eta;
    } else {
      const double mu = nu.mu[ua](i);
      psi(i) = in_a * (pb_zw / pa_zw) / pb_z * (target(i) - mu) + in_b / pb_z * (mu - eta) + eta;
    }
    if (!std::isfinite(psi(i)))
      throw Error(ErrorKind::estimation, "non-finite pseudo-outcome at unit " + std::to_string(i));
  }
  return psi;
}

namespace {

Vector unit_weights(const NuisanceSet& nu, Index n) {
  return nu.weight.size() == n ? nu.weight : Vector::Ones(n);
}

double weighted_mean(const Vector& v, const Vector& w) { return v.dot(w) / w.sum(); }

}  // namespace

double counterfactual_mean_dr(const Vector& x, const Vector& target, const NuisanceSet& nu, int a,
                              int b) {
  return weighted_mean(dr_pseudo_outcomes(x, target, nu, a, b), unit_weights(nu, x.size()));
}

double counterfactual_mean_plugin(const NuisanceSet& nu, int a, int b) {
  return weighted_mean(nu.eta[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)],
                       unit_weights(nu, nu.n()));
}

EffectTriple ArmMeans::effects() const {
  EffectTriple t;
  t.nde = m10 - m00;
  t.nie = m11 - m10;
  t.te = t.nde + t.nie;
  t.se = (obs1 - m11) - (obs0 - m00);
  return t;
}

json ArmMeans::to_json() const {
  return {{"m_x0_wx0", m00}, {"m_x1_wx0", m10}, {"m_x1_wx1", m11},
          {"mean_x0", obs0}, {"mean_x1", obs1}};
}

ArmMeans UnitContributions::means(std::span<const Index> rows) const {
  const Index n = x.size();
  const Vector w = weight.size() == n ? weight : Vector::Ones(n);
  double sw = 0, s00 = 0, s10 = 0, s11 = 0, sw0 = 0, sw1 = 0, t0 = 0, t1 = 0;
  auto add = [&](Index i) {
    const double wi = w(i);
    sw += wi;
    s00 += wi * c00(i);
    s10 += wi * c10(i);
    s11 += wi * c11(i);
    if (x(i) == 1.0) {
      sw1 += wi;
      t1 += wi * target(i);
    } else {
      sw0 += wi;
      t0 += wi * target(i);
    }
  };
  if (rows.empty())
    for (Index i = 0; i < n; ++i) add(i);
  else
    for (Index i : rows) add(i);
  if (sw0 == 0 || sw1 == 0) throw Error(ErrorKind::estimation, "an x group is empty");
  return {s00 / sw, s10 / sw, s11 / sw, t0 / sw0, t1 / sw1};
}

UnitContributions dr_contributions(const Vector& x, const Vector& target, const NuisanceSet& nu) {
  return {dr_pseudo_outcomes(x, target, nu, 0, 0), dr_pseudo_outcomes(x, target, nu, 1, 0),
          dr_pseudo_outcomes(x, target, nu, 1, 1), target, x, unit_weights(nu, x.size())};
}

UnitContributions plugin_contributions(const Vector& x, const Vector& target, const NuisanceSet& nu) {
  return {nu.eta[0][0], nu.eta[0][1], nu.eta[1][1], target, x, unit_weights(nu, x.size())};
}

// ---------------------------------------------------------------------------

Vector effect_target(const SfmDataset& d, TargetKind target, const TrainedScorer* scorer) {
  if (target == TargetKind::data_outcome) return d.y;
  if (!scorer) throw Error(ErrorKind::config, "model target requires a scorer");
  const Vector s = score(*scorer, d);
  return target == TargetKind::model_score ? s : harden(*scorer, s);
}

UnitContributions direct_counterfactual_contributions(const SfmDataset& d, const TrainedScorer& s,
                                                      TargetKind target, std::uint64_t seed) {
  if (target == TargetKind::data_outcome)
    throw Error(ErrorKind::config, "direct_counterfactual applies to model targets only");
  const SfmDataset a = align(s, d);
  const Index n = a.n();

  Vector e;
  if (a.dim_z() > 0) {
    TrainConfig tc = LearnerConfig{}.train;
    tc.seed = derive_seed(seed, 0xe5);
    e = fit_logistic(standardize_columns(a.z), a.x, tc, 0.0, 1e-3).predict_proba(standardize_columns(a.z));
  } else {
    e = Vector::Constant(n, a.x.mean());
  }
  std::vector<double> sorted(e.data(), e.data() + n);
  std::vector<double> edges;
  for (int q = 1; q < 10; ++q) edges.push_back(quantile(sorted, q / 10.0));
  auto stratum = [&](double v) {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
  };

  std::array<std::vector<IndexList>, 2> pools{std::vector<IndexList>(10), std::vector<IndexList>(10)};
  for (Index i = 0; i < n; ++i) pools[a.x(i) == 1.0 ? 1 : 0][stratum(e(i))].push_back(i);
  for (int b = 0; b < 2; ++b)
    if (std::all_of(pools[b].begin(), pools[b].end(), [](const IndexList& p) { return p.empty(); }))
      throw Error(ErrorKind::estimation, "direct_counterfactual: an x group is empty");

  auto donor_pool = [&](int b, std::size_t st) -> const IndexList& {
    for (std::size_t off = 0; off < 10; ++off) {
      if (st >= off && !pools[b][st - off].empty()) return pools[b][st - off];
      if (st + off < 10 && !pools[b][st + off].empty()) return pools[b][st + off];
    }
    return pools[b][st];
  };

  std::array<Matrix, 2> wb{a.w, a.w};
  for (Index i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, 0xdc, static_cast<std::uint64_t>(i));
    for (int b = 0; b < 2; ++b) {
      const double u = uniform01(rng);
      if (a.x(i) == static_cast<double>(b)) continue;
      const IndexList& pool = donor_pool(b, stratum(e(i)));
      const auto pick = std::min<std::size_t>(pool.size() - 1,
                                              static_cast<std::size_t>(u * static_cast<double>(pool.size())));
      wb[static_cast<std::size_t>(b)].row(i) = a.w.row(pool[pick]);
    }
  }

  auto arm = [&](double xv, int b) {
    Vector sc = score_rows(s, Vector::Constant(n, xv), a.z, wb[static_cast<std::size_t>(b)]);
    return target == TargetKind::model_score ? sc : harden(s, sc);
  };
  UnitContributions c;
  c.c00 = arm(0.0, 0);
  c.c10 = arm(1.0, 0);
  c.c11 = arm(1.0, 1);
  const Vector obs = score_rows(s, a.x, a.z, a.w);
  c.target = target == TargetKind::model_score ? obs : harden(s, obs);
  c.x = a.x;
  c.weight = Vector::Ones(n);
  return c;
}

// ---------------------------------------------------------------------------

std::vector<Interval> bootstrap_intervals(
    Index n, const std::function<Vector(std::span<const Index>)>& statistic, int replicates,
    std::uint64_t seed, double level) {
  if (replicates < 50) throw Error(ErrorKind::config, "bootstrap needs at least 50 replicates");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::config, "bootstrap level must be in (0, 1)");
  if (n <= 0) throw Error(ErrorKind::bootstrap, "bootstrap on empty data");

  std::vector<std::optional<Vector>> results(static_cast<std::size_t>(replicates));
  parallel_for(results.size(), [&](std::size_t r) {
    Rng rng = make_rng(seed, 0xb007, r);
    IndexList rows(static_cast<std::size_t>(n));
    for (auto& v : rows) v = uniform_index(rng, n);
    try {
      Vector v = statistic(rows);
      if (v.allFinite()) results[r] = std::move(v);
    } catch (const Error&) {
    }
  });

  std::size_t failures = 0;
  Index dim = -1;
  for (const auto& r : results) {
    if (!r) {
      ++failures;
    } else if (dim < 0) {
      dim = r->size();
    }
  }
  if (static_cast<double>(failures) > 0.1 * replicates || dim < 0)
    throw Error(ErrorKind::bootstrap, "bootstrap unstable: " + std::to_string(failures) + " of " +
                                          std::to_string(replicates) + " replicates failed");

  const double alpha = (1.0 - level) / 2.0;
  std::vector<Interval> out(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) {
    std::vector<double> vals;
    for (const auto& r : results)
      if (r) vals.push_back((*r)(j));
    out[static_cast<std::size_t>(j)] = {quantile(vals, alpha), quantile(vals, 1.0 - alpha)};
  }
  return out;
}

Interval bootstrap_ci(Index n, const std::function<double(std::span<const Index>)>& statistic,
                      int replicates, std::uint64_t seed, double level) {
  return bootstrap_intervals(
      n, [&](std::span<const Index> rows) { return Vector::Constant(1, statistic(rows)); },
      replicates, seed, level)[0];
}

// ---------------------------------------------------------------------------

void EstimateConfig::validate() const {
  learner.validate();
  if (bootstrap != 0 && bootstrap < 50)
    throw Error(ErrorKind::config, "bootstrap must be 0 or at least 50");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::config, "level must be in (0, 1)");
  if (estimator == EstimatorKind::direct_counterfactual && target == TargetKind::data_outcome)
    throw Error(ErrorKind::config, "direct_counterfactual applies to model targets only");
}

json EstimateConfig::to_json() const {
  return {{"target", to_string(target)},
          {"estimator", to_string(estimator)},
          {"learner", learner.to_json()},
          {"bootstrap", bootstrap},
          {"refit_in_bootstrap", refit_in_bootstrap},
          {"level", level},
          {"seed", seed}};
}

EstimateConfig EstimateConfig::from_json(const json& j) {
  EstimateConfig c;
  if (j.contains("target")) c.target = target_kind_from_string(j.at("target").get<std::string>());
  if (j.contains("estimator"))
    c.estimator = estimator_kind_from_string(j.at("estimator").get<std::string>());
  if (j.contains("learner")) c.learner = LearnerConfig::from_json(j.at("learner"));
  c.bootstrap = j.value("bootstrap", c.bootstrap);
  c.refit_in_bootstrap = j.value("refit_in_bootstrap", c.refit_in_bootstrap);
  c.level = j.value("level", c.level);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json EffectReport::to_json() const {
  json j;
  j["target"] = to_string(target);
  j["estimator"] = to_string(estimator);
  j["effects"] = point.to_json();
  j["arms"] = arms.to_json();
  if (ci) {
    const char* names[] = {"te", "nde", "nie", "se"};
    json c;
    for (std::size_t k = 0; k < 4; ++k) c[names[k]] = {(*ci)[k].lo, (*ci)[k].hi};
    c["nie_appendixA"] = {-(*ci)[2].hi, -(*ci)[2].lo};
    j["ci"] = c;
  } else {
    j["ci"] = nullptr;
  }
  j["bootstrap"] = bootstrap;
  j["seed"] = seed;
  j["diagnostics"] = diagnostics;
  return j;
}

namespace {

UnitContributions contributions_for(const SfmDataset& d, const Vector& target,
                                    const EstimateConfig& cfg, const TrainedScorer* scorer,
                                    json* diagnostics) {
  if (cfg.estimator == EstimatorKind::direct_counterfactual)
    return direct_counterfactual_contributions(d, *scorer, cfg.target, derive_seed(cfg.seed, 0xdc));
  const NuisanceSet nu = fit_nuisances(d, target, cfg.learner, derive_seed(cfg.seed, 0x4e));
  if (diagnostics) *diagnostics = nu.diagnostics(d.x);
  return cfg.estimator == EstimatorKind::plugin ? plugin_contributions(d.x, target, nu)
                                                : dr_contributions(d.x, target, nu);
}

Vector effect_vector(const EffectTriple& t) {
  Vector v(4);
  v << t.te, t.nde, t.nie, t.se;
  return v;
}

}  // namespace

EffectReport estimate_effects(const SfmDataset& d, const EstimateConfig& config,
                              const TrainedScorer* scorer) {
  config.validate();
  if (config.target != TargetKind::data_outcome && !scorer)
    throw Error(ErrorKind::config, "model target requires a scorer");

  EffectReport rep;
  rep.target = config.target;
  rep.estimator = config.estimator;
  rep.bootstrap = config.bootstrap;
  rep.seed = config.seed;

  const Vector target = effect_target(d, config.target, scorer);
  const UnitContributions contrib = contributions_for(d, target, config, scorer, &rep.diagnostics);
  rep.arms = contrib.means();
  rep.point = rep.arms.effects();

  if (config.bootstrap > 0) {
    std::function<Vector(std::span<const Index>)> stat;
    if (config.refit_in_bootstrap) {
      stat = [&](std::span<const Index> rows) {
        const SfmDataset sub = subset(d, rows);
        const Vector t = take(target, rows);
        return effect_vector(contributions_for(sub, t, config, scorer, nullptr).means().effects());
      };
    } else {
      stat = [&](std::span<const Index> rows) { return effect_vector(contrib.means(rows).effects()); };
    }
    const auto iv = bootstrap_intervals(d.n(), stat, config.bootstrap, derive_seed(config.seed, 0xb5),
                                        config.level);
    rep.ci = std::array<Interval, 4>{iv[0], iv[1], iv[2], iv[3]};
  }
  rep.diagnostics["n"] = d.n();
  return rep;
}

}  // namespace pathfair

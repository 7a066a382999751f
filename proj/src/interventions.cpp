#include "pathfair/interventions.hpp"

#include "pathfair/dimred.hpp"
#include "pathfair/importance.hpp"
#include "pathfair/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace pathfair {

using nlohmann::json;

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::inprocessing: return "inprocessing";
    case Strategy::fair_resampling: return "fair_resampling";
    case Strategy::unaware: return "unaware";
    case Strategy::unbiased_fs: return "unbiased_fs";
    case Strategy::greedy_fs: return "greedy_fs";
    case Strategy::lfr: return "lfr";
    case Strategy::eq_odds: return "eq_odds";
  }
  return "inprocessing";
}

Strategy strategy_from_string(const std::string& s) {
  for (auto v : {Strategy::inprocessing, Strategy::fair_resampling, Strategy::unaware,
                 Strategy::unbiased_fs, Strategy::greedy_fs, Strategy::lfr, Strategy::eq_odds})
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::config, "unknown strategy '" + s + "'");
}

std::string to_string(EffectPath p) {
  switch (p) {
    case EffectPath::nde: return "nde";
    case EffectPath::nie: return "nie";
    case EffectPath::se: return "se";
  }
  return "nde";
}

EffectPath effect_path_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "nde") return EffectPath::nde;
  if (l == "nie") return EffectPath::nie;
  if (l == "se") return EffectPath::se;
  throw Error(ErrorKind::config, "unknown effect path '" + s + "' (nde, nie, se)");
}

std::vector<EffectPath> parse_effect_paths(const std::string& csv) {
  std::vector<EffectPath> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(effect_path_from_string(item));
  return out;
}

json LfrConfig::to_json() const {
  return {{"prototypes", prototypes}, {"a_x", a_x}, {"a_y", a_y}, {"a_z", a_z}, {"train", train.to_json()}};
}

LfrConfig LfrConfig::from_json(const json& j) {
  LfrConfig c;
  c.prototypes = j.value("prototypes", c.prototypes);
  c.a_x = j.value("a_x", c.a_x);
  c.a_y = j.value("a_y", c.a_y);
  c.a_z = j.value("a_z", c.a_z);
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  return c;
}

std::vector<double> log_lambda_grid(int points, double lo, double hi) {
  std::vector<double> g;
  if (points == 1) return {lo};
  for (int i = 0; i < points; ++i)
    g.push_back(std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (points - 1)));
  return g;
}

void InterventionConfig::validate() const {
  base.train.validate();
  const bool uses_lambda = strategy == Strategy::inprocessing || strategy == Strategy::fair_resampling ||
                           strategy == Strategy::eq_odds;
  if (uses_lambda && lambda_grid.empty()) throw Error(ErrorKind::config, "lambda_grid must be nonempty");
  for (double l : lambda_grid)
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::config, "lambda values must be finite and >= 0");
  if ((strategy == Strategy::inprocessing || strategy == Strategy::fair_resampling) && targets.empty())
    throw Error(ErrorKind::config, to_string(strategy) + " needs target paths");
  if (strategy == Strategy::fair_resampling) {
    for (auto t : targets)
      if (t == EffectPath::se) throw Error(ErrorKind::config, "fair_resampling cannot target SE");
    if (std::find(targets.begin(), targets.end(), EffectPath::nde) == targets.end())
      throw Error(ErrorKind::config, "fair_resampling targets {nde} or {nde, nie}");
  }
  for (Index n : feature_counts)
    if (n < 1) throw Error(ErrorKind::config, "feature counts must be >= 1");
  if (draws < 1) throw Error(ErrorKind::config, "draws must be >= 1");
  if (lfr.prototypes < 1) throw Error(ErrorKind::config, "LFR needs at least one prototype");
  if (lfr.a_x < 0 || lfr.a_y < 0 || lfr.a_z < 0) throw Error(ErrorKind::config, "LFR weights must be >= 0");
  if (greedy_alpha_points < 2) throw Error(ErrorKind::config, "greedy alpha grid needs >= 2 points");
  if (!(propensity_clip > 0.0 && propensity_clip < 0.5))
    throw Error(ErrorKind::config, "propensity_clip must lie in (0, 0.5)");
}

json InterventionConfig::to_json() const {
  std::vector<std::string> t;
  for (auto p : targets) t.push_back(to_string(p));
  return {{"strategy", to_string(strategy)}, {"targets", t},
          {"lambda_grid", lambda_grid},      {"feature_counts", feature_counts},
          {"lfr", lfr.to_json()},            {"draws", draws},
          {"base", base.to_json()},          {"propensity_clip", propensity_clip},
          {"greedy_alpha_points", greedy_alpha_points}, {"pfi_repeats", pfi_repeats},
          {"seed", seed}};
}

InterventionConfig InterventionConfig::from_json(const json& j) {
  try {
    InterventionConfig c;
    c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j.at("targets")) c.targets.push_back(effect_path_from_string(t.get<std::string>()));
    }
    c.lambda_grid = j.value("lambda_grid", c.lambda_grid);
    c.feature_counts = j.value("feature_counts", c.feature_counts);
    if (j.contains("lfr")) c.lfr = LfrConfig::from_json(j.at("lfr"));
    c.draws = j.value("draws", c.draws);
    if (j.contains("base")) c.base = BaselineConfig::from_json(j.at("base"));
    c.propensity_clip = j.value("propensity_clip", c.propensity_clip);
    c.greedy_alpha_points = j.value("greedy_alpha_points", c.greedy_alpha_points);
    c.pfi_repeats = j.value("pfi_repeats", c.pfi_repeats);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid intervention config: ") + e.what());
  }
}

json CandidateSet::to_json() const {
  std::vector<std::string> t;
  for (auto p : targets) t.push_back(to_string(p));
  json cands = json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    cands.push_back({{"index", i},
                     {"tag", c.scorer.tag},
                     {"parameters", c.parameters},
                     {"intervention_level", c.intervention_level},
                     {"val_bce", c.val_bce},
                     {"val_effects", c.val_effects.to_json()},
                     {"val_target_effect", c.val_target_effect},
                     {"threshold", c.scorer.threshold}});
  }
  json j{{"strategy", to_string(strategy)}, {"targets", t}, {"candidates", cands}};
  j["selected"] = selected ? json(*selected) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------

double ScoreFunctional::value(const Vector& theta, Vector* grad) const {
  const Index p = features.cols();
  const Vector t = (features * theta.head(p)).array() + theta(p);
  const Vector s = t.unaryExpr([](double v) { return sigmoid(v); });
  if (grad) {
    const Vector ds = coef.array() * s.array() * (1.0 - s.array());
    grad->resize(p + 1);
    grad->head(p) = features.transpose() * ds;
    (*grad)(p) = ds.sum();
  }
  return coef.dot(s);
}

FrozenPropensities fit_frozen_propensities(const SfmDataset& d, const TrainConfig& train, double clip_bound) {
  FrozenPropensities out;
  TrainConfig tc = train;
  tc.seed = derive_seed(train.seed, 0xe0);
  if (d.dim_z() > 0) {
    out.e_model = fit_logistic(d.z, d.x, tc, 0.0, 1e-3);
  } else {
    out.e_model.weights = Vector::Zero(0);
    out.e_model.bias = logit(clip(d.x.mean(), kProbClip, 1.0 - kProbClip));
  }
  Matrix zw(d.n(), d.dim_z() + d.dim_w());
  zw << d.z, d.w;
  tc.seed = derive_seed(train.seed, 0xe1);
  const LinearModel g_model = fit_logistic(zw, d.x, tc, 0.0, 1e-3);
  const Vector e_raw = out.e_model.predict_proba(d.z);
  const Vector g_raw = g_model.predict_proba(zw);
  Index clipped = 0;
  for (Index i = 0; i < d.n(); ++i)
    if (e_raw(i) < clip_bound || e_raw(i) > 1.0 - clip_bound) ++clipped;
  out.clip_rate = static_cast<double>(clipped) / static_cast<double>(d.n());
  out.e = e_raw.unaryExpr([clip_bound](double v) { return clip(v, clip_bound, 1.0 - clip_bound); });
  out.g = g_raw.unaryExpr([clip_bound](double v) { return clip(v, clip_bound, 1.0 - clip_bound); });
  return out;
}

namespace {

Vector hajek(const Vector& raw, const Vector& mask) {
  const Vector w = raw.cwiseProduct(mask);
  return w / w.sum();
}

}  // namespace

ScoreFunctional effect_proxy(EffectPath path, const SfmDataset& d, const FrozenPropensities& p) {
  const FeatureMask all = FeatureMask::all(d.dim_z(), d.dim_w());
  const Matrix obs = feature_block(all, d);
  const Vector in1 = d.x;
  const Vector in0 = Vector::Ones(d.n()) - d.x;
  const Vector inv_e = p.e.cwiseInverse();
  const Vector inv_1me = (Vector::Ones(d.n()) - p.e).cwiseInverse();

  ScoreFunctional f;
  switch (path) {
    case EffectPath::nde: {
      // Counterfactual X flip on the x0 rows, reweighted to the population Z.
      const Vector v = hajek(inv_1me, in0);
      IndexList rows;
      for (Index i = 0; i < d.n(); ++i)
        if (d.x(i) == 0.0) rows.push_back(i);
      const auto m = static_cast<Index>(rows.size());
      f.features.resize(2 * m, obs.cols());
      f.coef.resize(2 * m);
      for (Index r = 0; r < m; ++r) {
        const Index i = rows[static_cast<std::size_t>(r)];
        f.features.row(r) = obs.row(i);
        f.features(r, 0) = 1.0;
        f.coef(r) = v(i);
        f.features.row(m + r) = obs.row(i);
        f.coef(m + r) = -v(i);
      }
      return f;
    }
    case EffectPath::nie: {
      Vector nested(d.n());
      for (Index i = 0; i < d.n(); ++i) nested(i) = (1.0 - p.g(i)) / (p.g(i) * (1.0 - p.e(i)));
      f.features = obs;
      f.coef = hajek(inv_e, in1) - hajek(nested, in1);
      return f;
    }
    case EffectPath::se: {
      f.features = obs;
      const Vector mean1 = in1 / in1.sum();
      const Vector mean0 = in0 / in0.sum();
      f.coef = (mean1 - hajek(inv_e, in1)) - (mean0 - hajek(inv_1me, in0));
      return f;
    }
  }
  return f;
}

std::array<ScoreFunctional, 2> eq_odds_gaps(const Matrix& features, const Vector& x, const Vector& y) {
  std::array<double, 4> count{0, 0, 0, 0};  // (y, x) cells
  for (Index i = 0; i < x.size(); ++i) count[static_cast<std::size_t>(2 * (y(i) == 1.0) + (x(i) == 1.0))] += 1.0;
  for (double c : count)
    if (c == 0) throw Error(ErrorKind::data, "eq_odds needs both outcome classes in both x groups");
  std::array<ScoreFunctional, 2> gaps;
  for (int cls = 0; cls < 2; ++cls) {
    // cls 1: TPR gap over y = 1; cls 0: FPR gap over y = 0.
    Vector coef = Vector::Zero(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      if ((y(i) == 1.0) != (cls == 1)) continue;
      const bool g1 = x(i) == 1.0;
      coef(i) = g1 ? -1.0 / count[static_cast<std::size_t>(2 * cls + 1)]
                   : 1.0 / count[static_cast<std::size_t>(2 * cls)];
    }
    gaps[static_cast<std::size_t>(1 - cls)] = {features, coef};
  }
  return gaps;
}

SmoothObjective squared_penalty(std::vector<ScoreFunctional> parts, double lambda) {
  return [parts = std::move(parts), lambda](const Vector& theta, Vector* grad) {
    double total = 0.0;
    if (grad) *grad = Vector::Zero(theta.size());
    for (const auto& f : parts) {
      Vector g;
      const double v = f.value(theta, grad ? &g : nullptr);
      total += v * v;
      if (grad) *grad += 2.0 * lambda * v * g;
    }
    return lambda * total;
  };
}

// ---------------------------------------------------------------------------

namespace {

CandidateSet make_set(const InterventionConfig& cfg) {
  CandidateSet set;
  set.strategy = cfg.strategy;
  set.targets = cfg.targets;
  return set;
}

void sort_candidates(CandidateSet& set) {
  std::stable_sort(set.candidates.begin(), set.candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.intervention_level < b.intervention_level;
                   });
}

TrainedScorer logistic_scorer(const std::string& tag, const FeatureMask& mask, const SfmDataset& train,
                              const SfmDataset& val, const InterventionConfig& cfg,
                              const SmoothObjective& penalty = {}, const Vector* weights = nullptr) {
  TrainedScorer s;
  s.tag = tag;
  s.kind = ScorerModelKind::linear;
  s.mask = mask;
  s.seed = cfg.base.train.seed;
  s.hyperparameters = cfg.base.to_json();
  s.linear = fit_logistic_penalized(feature_block(mask, train), train.y, cfg.base.train, 0.0,
                                    cfg.base.l2, penalty, weights);
  return finish_scorer(std::move(s), train, val);
}

std::string lambda_tag(const std::string& strategy, double lambda) {
  return strategy + "_lambda=" + format_double(lambda);
}

std::vector<Index> default_counts(const InterventionConfig& cfg, Index dim_w) {
  std::vector<Index> counts = cfg.feature_counts;
  if (counts.empty())
    for (double f : {0.2, 0.4, 0.6, 0.8}) counts.push_back(kept_count(dim_w, f));
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
  for (Index n : counts)
    if (n > dim_w) throw Error(ErrorKind::config, "feature count exceeds |W|");
  return counts;
}

FeatureMask mask_with_mediators(Index dim_z, Index dim_w, const IndexList& keep) {
  FeatureMask m = FeatureMask::all(dim_z, dim_w);
  std::fill(m.w.begin(), m.w.end(), false);
  for (Index j : keep) m.w[static_cast<std::size_t>(j)] = true;
  return m;
}

}  // namespace

CandidateSet train_inprocessing(const SfmDataset& train, const SfmDataset& val,
                                const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  const FrozenPropensities prop = fit_frozen_propensities(train, cfg.base.train, cfg.propensity_clip);
  std::vector<ScoreFunctional> parts;
  for (auto t : cfg.targets) parts.push_back(effect_proxy(t, train, prop));
  const FeatureMask all = FeatureMask::all(train.dim_z(), train.dim_w());

  set.candidates.resize(cfg.lambda_grid.size());
  parallel_for(cfg.lambda_grid.size(), [&](std::size_t k) {
    const double lambda = cfg.lambda_grid[k];
    SmoothObjective pen = lambda > 0.0 ? squared_penalty(parts, lambda) : SmoothObjective{};
    Candidate c;
    try {
      c.scorer = logistic_scorer(lambda_tag("inprocessing", lambda), all, train, val, cfg, pen);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::divergence)
        throw Error(ErrorKind::divergence, "in-processing diverged at lambda=" + format_double(lambda));
      throw;
    }
    c.intervention_level = lambda;
    c.parameters = {{"lambda", lambda}};
    c.scorer.hyperparameters["lambda"] = lambda;
    set.candidates[k] = std::move(c);
  });
  sort_candidates(set);
  return set;
}

CandidateSet train_fair_resampling(const SfmDataset& train, const SfmDataset& val,
                                   const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  const FrozenPropensities prop = fit_frozen_propensities(train, cfg.base.train, cfg.propensity_clip);
  const bool nie = std::find(cfg.targets.begin(), cfg.targets.end(), EffectPath::nie) != cfg.targets.end();

  // Stabilized weights P(X = x_i) / P(X = x_i | Z_i) remove the X-Z association.
  const double px = train.x.mean();
  Vector weights(train.n());
  for (Index i = 0; i < train.n(); ++i)
    weights(i) = train.x(i) == 1.0 ? px / prop.e(i) : (1.0 - px) / (1.0 - prop.e(i));
  weights *= static_cast<double>(train.n()) / weights.sum();

  std::optional<MediatorPool> pool;
  if (nie) {
    MediatorPool mp;
    std::vector<double> e(prop.e.data(), prop.e.data() + prop.e.size());
    for (int q = 1; q < 10; ++q) mp.edges.push_back(quantile(e, q / 10.0));
    std::vector<IndexList> members(10);
    for (Index i = 0; i < train.n(); ++i)
      if (train.x(i) == 0.0) members[mp.stratum_of(prop.e(i))].push_back(i);
    IndexList all_x0;
    for (const auto& m : members) all_x0.insert(all_x0.end(), m.begin(), m.end());
    std::sort(all_x0.begin(), all_x0.end());
    for (std::size_t s = 0; s < members.size(); ++s) {
      IndexList rows = members[s].empty() ? all_x0 : members[s];
      Rng rng = make_rng(cfg.seed, 0x9001, s);
      shuffle(rows, rng);
      rows.resize(std::min<std::size_t>(rows.size(), 20));
      mp.strata.push_back(take_rows(train.w, rows));
    }
    pool = std::move(mp);
  }

  std::vector<ScoreFunctional> parts;
  for (auto t : cfg.targets) parts.push_back(effect_proxy(t, train, prop));
  const FeatureMask all = FeatureMask::all(train.dim_z(), train.dim_w());

  set.candidates.resize(cfg.lambda_grid.size());
  parallel_for(cfg.lambda_grid.size(), [&](std::size_t k) {
    const double lambda = cfg.lambda_grid[k];
    SmoothObjective pen = lambda > 0.0 ? squared_penalty(parts, lambda) : SmoothObjective{};
    TrainedScorer s;
    s.tag = lambda_tag("fair_resampling", lambda);
    s.kind = ScorerModelKind::linear;
    s.mask = all;
    s.seed = cfg.base.train.seed;
    s.hyperparameters = cfg.base.to_json();
    s.hyperparameters["lambda"] = lambda;
    s.hyperparameters["draws"] = cfg.draws;
    s.linear = fit_logistic_penalized(feature_block(all, train), train.y, cfg.base.train, 0.0,
                                      cfg.base.l2, pen, &weights);
    s.policy = MarginalizationPolicy::marginalize_x;
    s.draws = cfg.draws;
    s.draw_seed = derive_seed(cfg.seed, 0xd4a);
    s.x_propensity = prop.e_model;
    s.mediator_pool = pool;
    if (prop.clip_rate > 0.2)
      s.warnings.push_back("propensity clip rate " + format_double(prop.clip_rate) + " exceeds 20%");
    Candidate c;
    c.scorer = finish_scorer(std::move(s), train, val);
    c.intervention_level = lambda;
    c.parameters = {{"lambda", lambda}};
    set.candidates[k] = std::move(c);
  });
  sort_candidates(set);
  return set;
}

CandidateSet train_unaware(const SfmDataset& train, const SfmDataset& val, const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  FeatureMask mask = FeatureMask::all(train.dim_z(), train.dim_w());
  mask.x = false;
  for (std::size_t j = 0; j < mask.z.size(); ++j)
    if (j < train.z_demographic.size() && train.z_demographic[j]) mask.z[j] = false;
  Candidate c;
  c.scorer = logistic_scorer("unaware", mask, train, val, cfg);
  std::vector<std::string> dropped;
  for (std::size_t j = 0; j < mask.z.size(); ++j)
    if (!mask.z[j]) dropped.push_back(train.z_names[j]);
  c.parameters = {{"dropped_confounders", dropped}};
  set.candidates.push_back(std::move(c));
  return set;
}

CandidateSet train_unbiased_fs(const SfmDataset& train, const SfmDataset& val,
                               const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  const std::vector<Index> counts = default_counts(cfg, train.dim_w());
  const Vector bias = smd(train.w, train.x).cwiseAbs();
  set.candidates.resize(counts.size());
  parallel_for(counts.size(), [&](std::size_t k) {
    const Index n = counts[k];
    const IndexList keep = top_k(-bias, n);
    Candidate c;
    c.scorer = logistic_scorer("unbiased_fs_n=" + std::to_string(n),
                               mask_with_mediators(train.dim_z(), train.dim_w(), keep), train, val, cfg);
    c.scorer.hyperparameters["n_features"] = n;
    c.intervention_level = -static_cast<double>(n);
    c.parameters = {{"n_features", n}, {"selected", keep}};
    set.candidates[k] = std::move(c);
  });
  sort_candidates(set);
  return set;
}

Vector minmax_normalize(const Vector& v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v(i))) {
      lo = std::min(lo, v(i));
      hi = std::max(hi, v(i));
    }
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) == std::numeric_limits<double>::infinity()) out(i) = 1.0;
    else if (!std::isfinite(v(i))) out(i) = 0.0;
    else out(i) = hi > lo ? (v(i) - lo) / (hi - lo) : 0.0;
  }
  return out;
}

IndexList greedy_selection(const Vector& importance, const Vector& bias, double alpha, Index n) {
  const Vector score = (1.0 - alpha) * importance - alpha * bias;
  return top_k(score, n);
}

GreedyCurve greedy_curve(const Vector& importance, const Vector& bias, Index n, int points) {
  GreedyCurve c;
  for (int k = 0; k < points; ++k) {
    const double alpha = static_cast<double>(k) / (points - 1);
    const IndexList sel = greedy_selection(importance, bias, alpha, n);
    double mi = 0, mb = 0;
    for (Index j : sel) {
      mi += importance(j);
      mb += bias(j);
    }
    c.alphas.push_back(alpha);
    c.mean_importance.push_back(mi / static_cast<double>(sel.size()));
    c.mean_bias.push_back(mb / static_cast<double>(sel.size()));
  }
  const double x0 = c.mean_importance.front(), y0 = c.mean_bias.front();
  const double dx = c.mean_importance.back() - x0, dy = c.mean_bias.back() - y0;
  const double len = std::hypot(dx, dy);
  double best = 0.0;
  std::optional<std::size_t> arg;
  for (std::size_t k = 0; k < c.alphas.size(); ++k) {
    const double px = c.mean_importance[k] - x0, py = c.mean_bias[k] - y0;
    const double dist = len > 0 ? std::abs(dx * py - dy * px) / len : std::hypot(px, py);
    if (dist > best + 1e-12) {
      best = dist;
      arg = k;
    }
  }
  c.elbow = arg ? *arg : c.alphas.size() / 2;
  return c;
}

CandidateSet train_greedy_fs(const SfmDataset& train, const SfmDataset& val, const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  const std::vector<Index> counts = default_counts(cfg, train.dim_w());

  const TrainedScorer pilot = train_baseline(train, val, cfg.base);
  const FeatureMask all = FeatureMask::all(train.dim_z(), train.dim_w());
  IndexList wcols(static_cast<std::size_t>(train.dim_w()));
  std::iota(wcols.begin(), wcols.end(), 1 + train.dim_z());
  const Vector imp = permutation_importance(
      [&](const Matrix& m) { return pilot.linear.predict_proba(m); }, feature_block(all, val), val.y,
      ImportanceMetric::neg_bce, cfg.pfi_repeats, derive_seed(cfg.seed, 0x9f3), wcols);
  const Vector importance = minmax_normalize(imp);
  const Vector bias = minmax_normalize(smd(train.w, train.x).cwiseAbs());

  set.candidates.resize(counts.size());
  parallel_for(counts.size(), [&](std::size_t k) {
    const Index n = counts[k];
    const GreedyCurve curve = greedy_curve(importance, bias, n, cfg.greedy_alpha_points);
    const double alpha = curve.alphas[curve.elbow];
    const IndexList keep = greedy_selection(importance, bias, alpha, n);
    Candidate c;
    c.scorer = logistic_scorer("greedy_fs_n=" + std::to_string(n),
                               mask_with_mediators(train.dim_z(), train.dim_w(), keep), train, val, cfg);
    c.scorer.hyperparameters["n_features"] = n;
    c.scorer.hyperparameters["alpha"] = alpha;
    c.intervention_level = -static_cast<double>(n);
    c.parameters = {{"n_features", n},
                    {"alpha", alpha},
                    {"selected", keep},
                    {"curve", {{"alpha", curve.alphas},
                               {"mean_importance", curve.mean_importance},
                               {"mean_bias", curve.mean_bias}}}};
    set.candidates[k] = std::move(c);
  });
  sort_candidates(set);
  return set;
}

// ---------------------------------------------------------------------------

LfrBatchLoss lfr_loss(const Vector& theta, Index k, const Matrix& features, const Vector& x,
                      const Vector& y, const LfrConfig& cfg, Vector* grad) {
  const Index n = features.rows(), d = features.cols();
  const Eigen::Map<const Matrix> P(theta.data(), k, d);
  const Vector h = theta.segment(k * d, k);
  const Vector q = h.unaryExpr([](double v) { return sigmoid(v); });

  // Soft assignments.
  Matrix M(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < k; ++c) M(i, c) = -(features.row(i) - P.row(c)).squaredNorm();
    const double mx = M.row(i).maxCoeff();
    M.row(i) = (M.row(i).array() - mx).exp();
    M.row(i) /= M.row(i).sum();
  }
  const Vector yhat = (M * q).unaryExpr([](double v) { return clip(v, kProbClip, 1.0 - kProbClip); });
  const Matrix R = M * P;

  LfrBatchLoss loss;
  const double dn = static_cast<double>(n);
  for (Index i = 0; i < n; ++i)
    loss.prediction -= (y(i) * std::log(yhat(i)) + (1.0 - y(i)) * std::log(1.0 - yhat(i))) / dn;
  loss.reconstruction = (features - R).squaredNorm() / (dn * static_cast<double>(d));
  const double n1 = x.sum(), n0 = dn - n1;
  Vector diff = Vector::Zero(k);
  if (n1 > 0 && n0 > 0) {
    for (Index i = 0; i < n; ++i) diff += M.row(i).transpose() * (x(i) == 1.0 ? 1.0 / n1 : -1.0 / n0);
    loss.parity = diff.cwiseAbs().sum();
  }
  loss.total = cfg.a_z * loss.parity + cfg.a_x * loss.reconstruction + cfg.a_y * loss.prediction;
  if (!grad) return loss;

  Matrix G = Matrix::Zero(n, k);     // dL/dM
  Matrix gP = Matrix::Zero(k, d);
  Vector gq = Vector::Zero(k);
  for (Index i = 0; i < n; ++i) {
    const double p = yhat(i);
    const double dy = cfg.a_y * (p - y(i)) / (p * (1.0 - p)) / dn;
    G.row(i) += dy * q.transpose();
    gq += dy * M.row(i).transpose();
  }
  const Matrix dR = -2.0 * cfg.a_x / (dn * static_cast<double>(d)) * (features - R);
  G += dR * P.transpose();
  gP += M.transpose() * dR;
  if (n1 > 0 && n0 > 0) {
    const Vector sg = diff.unaryExpr([](double v) { return static_cast<double>((v > 0) - (v < 0)); });
    for (Index i = 0; i < n; ++i)
      G.row(i) += cfg.a_z * sg.transpose() * (x(i) == 1.0 ? 1.0 / n1 : -1.0 / n0);
  }
  // Softmax backward, then through a_ic = -|v_i - p_c|^2.
  for (Index i = 0; i < n; ++i) {
    const double inner = M.row(i).dot(G.row(i));
    for (Index c = 0; c < k; ++c) {
      const double da = M(i, c) * (G(i, c) - inner);
      gP.row(c) += 2.0 * da * (features.row(i) - P.row(c));
    }
  }
  grad->resize(theta.size());
  Eigen::Map<Matrix>(grad->data(), k, d) = gP;
  grad->segment(k * d, k) = gq.cwiseProduct(q.cwiseProduct((Vector::Ones(k) - q)));
  return loss;
}

CandidateSet train_lfr(const SfmDataset& train, const SfmDataset& val, const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  FeatureMask mask = FeatureMask::all(train.dim_z(), train.dim_w());
  mask.x = false;
  const Matrix f = feature_block(mask, train);
  const Matrix fv = feature_block(mask, val);
  const Index k = cfg.lfr.prototypes, d = f.cols();

  TrainConfig tc = cfg.lfr.train;
  tc.seed = derive_seed(cfg.seed, 0x1f4);
  Vector theta = Vector::Zero(k * d + k);
  {
    IndexList rows(static_cast<std::size_t>(train.n()));
    std::iota(rows.begin(), rows.end(), Index{0});
    Rng rng = make_rng(tc.seed, 0x1f5);
    shuffle(rows, rng);
    Eigen::Map<Matrix> P(theta.data(), k, d);
    for (Index c = 0; c < k; ++c)
      P.row(c) = f.row(rows[static_cast<std::size_t>(c % train.n())]);
  }
  auto batch = [&](const Vector& params, std::span<const Index> rows, Vector* grad) {
    return lfr_loss(params, k, take_rows(f, rows), take(train.x, rows), take(train.y, rows), cfg.lfr, grad)
        .total;
  };
  auto valid = [&](const Vector& params) {
    return lfr_loss(params, k, fv, val.x, val.y, cfg.lfr, nullptr).total;
  };
  const MinibatchResult res = train_minibatch(theta, train.n(), batch, valid, tc);
  if (!res.params.allFinite()) throw Error(ErrorKind::divergence, "LFR training diverged");

  TrainedScorer s;
  s.tag = "lfr";
  s.kind = ScorerModelKind::prototype;
  s.mask = mask;
  s.prototype.prototypes = Eigen::Map<const Matrix>(res.params.data(), k, d);
  s.prototype.head = res.params.segment(k * d, k);
  s.seed = tc.seed;
  s.hyperparameters = cfg.lfr.to_json();
  const LfrBatchLoss final_val = lfr_loss(res.params, k, fv, val.x, val.y, cfg.lfr, nullptr);
  s.hyperparameters["val_parity"] = final_val.parity;
  s.hyperparameters["val_reconstruction"] = final_val.reconstruction;
  Candidate c;
  c.scorer = finish_scorer(std::move(s), train, val);
  c.parameters = cfg.lfr.to_json();
  set.candidates.push_back(std::move(c));
  return set;
}

CandidateSet train_eq_odds(const SfmDataset& train, const SfmDataset& val, const InterventionConfig& cfg) {
  cfg.validate();
  CandidateSet set = make_set(cfg);
  const FeatureMask all = FeatureMask::all(train.dim_z(), train.dim_w());
  const auto gaps = eq_odds_gaps(feature_block(all, train), train.x, train.y);
  const std::vector<ScoreFunctional> parts{gaps[0], gaps[1]};
  set.candidates.resize(cfg.lambda_grid.size());
  parallel_for(cfg.lambda_grid.size(), [&](std::size_t k) {
    const double lambda = cfg.lambda_grid[k];
    SmoothObjective pen = lambda > 0.0 ? squared_penalty(parts, lambda) : SmoothObjective{};
    Candidate c;
    c.scorer = logistic_scorer(lambda_tag("eq_odds", lambda), all, train, val, cfg, pen);
    c.scorer.hyperparameters["lambda"] = lambda;
    c.intervention_level = lambda;
    c.parameters = {{"lambda", lambda}};
    set.candidates[k] = std::move(c);
  });
  sort_candidates(set);
  return set;
}

CandidateSet train_intervention(const SfmDataset& train, const SfmDataset& val,
                                const InterventionConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::inprocessing: return train_inprocessing(train, val, cfg);
    case Strategy::fair_resampling: return train_fair_resampling(train, val, cfg);
    case Strategy::unaware: return train_unaware(train, val, cfg);
    case Strategy::unbiased_fs: return train_unbiased_fs(train, val, cfg);
    case Strategy::greedy_fs: return train_greedy_fs(train, val, cfg);
    case Strategy::lfr: return train_lfr(train, val, cfg);
    case Strategy::eq_odds: return train_eq_odds(train, val, cfg);
  }
  throw Error(ErrorKind::config, "unknown strategy");
}

// ---------------------------------------------------------------------------

void evaluate_candidates(CandidateSet& set, const SfmDataset& val, std::uint64_t seed) {
  std::vector<EffectPath> targets = set.targets.empty() ? std::vector<EffectPath>{EffectPath::nde} : set.targets;
  parallel_for(set.candidates.size(), [&](std::size_t k) {
    Candidate& c = set.candidates[k];
    const Vector s = score(c.scorer, val);
    c.val_bce = bce(s, val.y);
    c.val_effects = direct_counterfactual_contributions(val, c.scorer, TargetKind::model_score, seed)
                        .means()
                        .effects();
    double total = 0;
    for (auto t : targets)
      total += std::abs(t == EffectPath::nde ? c.val_effects.nde
                        : t == EffectPath::nie ? c.val_effects.nie
                                               : c.val_effects.se);
    c.val_target_effect = total / static_cast<double>(targets.size());
  });
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = r;
    i = j;
  }
  return rank;
}

}  // namespace

std::size_t select_by_rank_sum(const std::vector<double>& bce_v, const std::vector<double>& effect,
                               const std::vector<double>& level) {
  if (bce_v.empty()) throw Error(ErrorKind::config, "candidate set is empty");
  const auto rb = average_ranks(bce_v);
  const auto re = average_ranks(effect);
  std::size_t best = 0;
  for (std::size_t i = 1; i < bce_v.size(); ++i) {
    const double si = rb[i] + re[i], sb = rb[best] + re[best];
    if (si < sb || (si == sb && level[i] < level[best])) best = i;
  }
  return best;
}

const TrainedScorer& select_candidate(CandidateSet& set, const SfmDataset& val, std::uint64_t seed) {
  if (set.candidates.empty()) throw Error(ErrorKind::config, "candidate set is empty");
  evaluate_candidates(set, val, seed);
  std::vector<double> b, e, l;
  for (const auto& c : set.candidates) {
    b.push_back(c.val_bce);
    e.push_back(c.val_target_effect);
    l.push_back(c.intervention_level);
  }
  set.selected = select_by_rank_sum(b, e, l);
  return set.candidates[*set.selected].scorer;
}

}  // namespace pathfair

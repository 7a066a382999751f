#include "pathfair/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace pathfair {

using nlohmann::json;

namespace {

std::vector<bool> json_bools(const json& j) {
  std::vector<bool> out;
  for (const auto& v : j) out.push_back(v.get<bool>());
  return out;
}

json bools_json(const std::vector<bool>& v) {
  json out = json::array();
  for (bool b : v) out.push_back(b);
  return out;
}

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix json_matrix(const json& j) {
  auto data = j.at("data").get<std::vector<double>>();
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  if (static_cast<Index>(data.size()) != rows * cols)
    throw Error(ErrorKind::schema_mismatch, "matrix JSON: inconsistent shape");
  return Eigen::Map<Matrix>(data.data(), rows, cols);
}

}  // namespace

// ---------------------------------------------------------------------------

FeatureMask FeatureMask::all(Index dim_z, Index dim_w) {
  return {true, std::vector<bool>(static_cast<std::size_t>(dim_z), true),
          std::vector<bool>(static_cast<std::size_t>(dim_w), true)};
}

Index FeatureMask::width() const {
  return (x ? 1 : 0) + std::count(z.begin(), z.end(), true) + std::count(w.begin(), w.end(), true);
}

bool FeatureMask::uses_all() const {
  return x && std::all_of(z.begin(), z.end(), [](bool b) { return b; }) &&
         std::all_of(w.begin(), w.end(), [](bool b) { return b; });
}

json FeatureMask::to_json() const { return {{"x", x}, {"z", bools_json(z)}, {"w", bools_json(w)}}; }

FeatureMask FeatureMask::from_json(const json& j) {
  return {j.at("x").get<bool>(), json_bools(j.at("z")), json_bools(j.at("w"))};
}

Matrix feature_block(const FeatureMask& mask, const Vector& x, const Matrix& z, const Matrix& w) {
  if (static_cast<Index>(mask.z.size()) != z.cols() || static_cast<Index>(mask.w.size()) != w.cols())
    throw Error(ErrorKind::schema_mismatch, "feature mask does not match the data schema");
  Matrix out(x.size(), mask.width());
  Index c = 0;
  if (mask.x) out.col(c++) = x;
  for (Index j = 0; j < z.cols(); ++j)
    if (mask.z[static_cast<std::size_t>(j)]) out.col(c++) = z.col(j);
  for (Index j = 0; j < w.cols(); ++j)
    if (mask.w[static_cast<std::size_t>(j)]) out.col(c++) = w.col(j);
  return out;
}

Matrix feature_block(const FeatureMask& mask, const SfmDataset& d) {
  return feature_block(mask, d.x, d.z, d.w);
}

// ---------------------------------------------------------------------------

Matrix PrototypeModel::assignments(const Matrix& features) const {
  if (features.cols() != prototypes.cols())
    throw Error(ErrorKind::schema_mismatch, "prototype model width mismatch");
  Matrix a(features.rows(), prototypes.rows());
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index k = 0; k < prototypes.rows(); ++k)
      a(i, k) = -(features.row(i) - prototypes.row(k)).squaredNorm();
    const double mx = a.row(i).maxCoeff();
    a.row(i) = (a.row(i).array() - mx).exp();
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

Vector PrototypeModel::predict_proba(const Matrix& features) const {
  const Vector heads = head.unaryExpr([](double v) { return sigmoid(v); });
  const Vector p = assignments(features) * heads;
  return p.unaryExpr([](double v) { return clip(v, kProbClip, 1.0 - kProbClip); });
}

json PrototypeModel::to_json() const {
  return {{"prototypes", matrix_json(prototypes)},
          {"head", std::vector<double>(head.data(), head.data() + head.size())}};
}

PrototypeModel PrototypeModel::from_json(const json& j) {
  PrototypeModel m;
  m.prototypes = json_matrix(j.at("prototypes"));
  auto h = j.at("head").get<std::vector<double>>();
  m.head = Eigen::Map<Vector>(h.data(), static_cast<Index>(h.size()));
  return m;
}

std::size_t MediatorPool::stratum_of(double propensity) const {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), propensity) -
                                  edges.begin());
}

json MediatorPool::to_json() const {
  json pools = json::array();
  for (const auto& m : strata) pools.push_back(matrix_json(m));
  return {{"edges", edges}, {"strata", pools}};
}

MediatorPool MediatorPool::from_json(const json& j) {
  MediatorPool p;
  p.edges = j.at("edges").get<std::vector<double>>();
  for (const auto& m : j.at("strata")) p.strata.push_back(json_matrix(m));
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::string kind_name(ScorerModelKind k) {
  switch (k) {
    case ScorerModelKind::linear: return "linear";
    case ScorerModelKind::mlp: return "mlp";
    case ScorerModelKind::prototype: return "prototype";
  }
  return "linear";
}

}  // namespace

json TrainedScorer::to_json() const {
  json j;
  j["format"] = "pathfair-scorer/1";
  j["tag"] = tag;
  j["model_kind"] = kind_name(kind);
  switch (kind) {
    case ScorerModelKind::linear: j["model"] = linear.to_json(); break;
    case ScorerModelKind::mlp: j["model"] = mlp.to_json(); break;
    case ScorerModelKind::prototype: j["model"] = prototype.to_json(); break;
  }
  j["mask"] = mask.to_json();
  j["threshold"] = threshold;
  j["policy"] = policy == MarginalizationPolicy::none ? "none" : "marginalize_x";
  j["draws"] = draws;
  j["draw_seed"] = draw_seed;
  if (x_propensity) j["x_propensity"] = x_propensity->to_json();
  if (mediator_pool) j["mediator_pool"] = mediator_pool->to_json();
  if (reference) {
    j["reference"] = reference->to_json();
    j["reference_hash"] = reference->hash();
  }
  j["dim_z"] = dim_z;
  j["dim_w"] = dim_w;
  j["seed"] = seed;
  j["hyperparameters"] = hyperparameters;
  j["warnings"] = warnings;
  return j;
}

TrainedScorer TrainedScorer::from_json(const json& j) {
  try {
    TrainedScorer s;
    s.tag = j.at("tag").get<std::string>();
    const auto kind = j.at("model_kind").get<std::string>();
    if (kind == "linear") {
      s.kind = ScorerModelKind::linear;
      s.linear = LinearModel::from_json(j.at("model"));
    } else if (kind == "mlp") {
      s.kind = ScorerModelKind::mlp;
      s.mlp = MlpModel::from_json(j.at("model"));
    } else if (kind == "prototype") {
      s.kind = ScorerModelKind::prototype;
      s.prototype = PrototypeModel::from_json(j.at("model"));
    } else {
      throw Error(ErrorKind::schema_mismatch, "unknown scorer model kind '" + kind + "'");
    }
    s.mask = FeatureMask::from_json(j.at("mask"));
    s.threshold = j.at("threshold").get<double>();
    s.policy = j.at("policy").get<std::string>() == "marginalize_x" ? MarginalizationPolicy::marginalize_x
                                                                    : MarginalizationPolicy::none;
    s.draws = j.value("draws", 1);
    s.draw_seed = j.value("draw_seed", std::uint64_t{0});
    if (j.contains("x_propensity")) s.x_propensity = LinearModel::from_json(j.at("x_propensity"));
    if (j.contains("mediator_pool")) s.mediator_pool = MediatorPool::from_json(j.at("mediator_pool"));
    if (j.contains("reference")) s.reference = Standardization::from_json(j.at("reference"));
    s.dim_z = j.at("dim_z").get<Index>();
    s.dim_w = j.at("dim_w").get<Index>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.hyperparameters = j.value("hyperparameters", json::object());
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("malformed scorer JSON: ") + e.what());
  }
}

TrainedScorer TrainedScorer::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::data, "cannot open model " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, "model file is not valid JSON: " + path.string());
  }
  return from_json(j);
}

void TrainedScorer::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

// ---------------------------------------------------------------------------

Vector model_output(const TrainedScorer& s, const Vector& x, const Matrix& z, const Matrix& w) {
  const Matrix f = feature_block(s.mask, x, z, w);
  switch (s.kind) {
    case ScorerModelKind::linear: return s.linear.predict_proba(f);
    case ScorerModelKind::mlp: return s.mlp.predict_proba(f);
    case ScorerModelKind::prototype: return s.prototype.predict_proba(f);
  }
  return Vector();
}

Vector score_rows(const TrainedScorer& s, const Vector& x, const Matrix& z, const Matrix& w) {
  if (z.cols() != s.dim_z || w.cols() != s.dim_w)
    throw Error(ErrorKind::schema_mismatch, "scorer expects |Z|=" + std::to_string(s.dim_z) +
                                                ", |W|=" + std::to_string(s.dim_w));
  if (s.policy == MarginalizationPolicy::none) return model_output(s, x, z, w);
  if (!s.x_propensity) throw Error(ErrorKind::schema_mismatch, "marginalizing scorer lacks P(X|Z)");

  const Index n = x.size();
  const Vector e = s.x_propensity->predict_proba(z);
  Vector total = Vector::Zero(n);
  for (int m = 0; m < s.draws; ++m) {
    Rng rng = make_rng(s.draw_seed, 0x3a7, static_cast<std::uint64_t>(m));
    const double ux = uniform01(rng);
    const double uw = uniform01(rng);
    Vector xd(n);
    for (Index i = 0; i < n; ++i) xd(i) = ux < e(i) ? 1.0 : 0.0;
    if (s.mediator_pool) {
      Matrix wd(n, w.cols());
      for (Index i = 0; i < n; ++i) {
        const Matrix& pool = s.mediator_pool->strata[s.mediator_pool->stratum_of(e(i))];
        wd.row(i) = pool.row(std::min<Index>(pool.rows() - 1,
                                             static_cast<Index>(uw * static_cast<double>(pool.rows()))));
      }
      total += model_output(s, xd, z, wd);
    } else {
      total += model_output(s, xd, z, w);
    }
  }
  return total / static_cast<double>(s.draws);
}

SfmDataset align(const TrainedScorer& s, const SfmDataset& d) {
  if (d.dim_z() != s.dim_z || d.dim_w() != s.dim_w)
    throw Error(ErrorKind::schema_mismatch, "scorer expects |Z|=" + std::to_string(s.dim_z) +
                                                ", |W|=" + std::to_string(s.dim_w));
  if (!s.reference) return d;
  return apply_standardization(d, *s.reference);
}

Vector score(const TrainedScorer& s, const SfmDataset& d) {
  const SfmDataset a = align(s, d);
  return score_rows(s, a.x, a.z, a.w);
}

Vector score_with_x(const TrainedScorer& s, const SfmDataset& d, double x_value) {
  const SfmDataset a = align(s, d);
  return score_rows(s, Vector::Constant(a.n(), x_value), a.z, a.w);
}

Vector harden(const TrainedScorer& s, const Vector& scores) {
  return scores.unaryExpr([t = s.threshold](double v) { return v >= t ? 1.0 : 0.0; });
}

Vector harden(const TrainedScorer& s, const SfmDataset& d) { return harden(s, score(s, d)); }

ThresholdChoice select_threshold(const Vector& scores, const Vector& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::data, "select_threshold: length mismatch");
  double pos = 0, neg = 0;
  for (Index i = 0; i < labels.size(); ++i) (labels(i) == 1.0 ? pos : neg) += 1.0;
  if (pos == 0 || neg == 0)
    throw Error(ErrorKind::degenerate_fit, "select_threshold: labels contain a single class");

  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) < scores(b); });

  // Walking thresholds upward; counts of rows strictly below the candidate.
  double pos_below = 0, neg_below = 0;
  ThresholdChoice best{scores(order.front()), -1.0};
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores(order[i]);
    const double tp = pos - pos_below;
    const double tn = neg_below;
    const double j = tp / pos + tn / neg;
    if (j > best.youden_sum) best = {t, j};
    while (i < order.size() && scores(order[i]) == t) {
      (labels(order[i]) == 1.0 ? pos_below : neg_below) += 1.0;
      ++i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

json BaselineConfig::to_json() const { return {{"train", train.to_json()}, {"l2", l2}}; }

BaselineConfig BaselineConfig::from_json(const json& j) {
  BaselineConfig c;
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  c.l2 = j.value("l2", c.l2);
  return c;
}

TrainedScorer finish_scorer(TrainedScorer s, const SfmDataset& train, const SfmDataset& val) {
  s.dim_z = train.dim_z();
  s.dim_w = train.dim_w();
  s.reference = train.standardization;
  const Vector val_scores = score_rows(s, val.x, val.z, val.w);
  s.threshold = select_threshold(val_scores, val.y).threshold;
  return s;
}

TrainedScorer train_baseline(const SfmDataset& train, const SfmDataset& val,
                             const BaselineConfig& config) {
  TrainedScorer s;
  s.tag = "baseline";
  s.kind = ScorerModelKind::linear;
  s.mask = FeatureMask::all(train.dim_z(), train.dim_w());
  s.seed = config.train.seed;
  s.hyperparameters = config.to_json();
  if (train.x.maxCoeff() == train.x.minCoeff())
    s.warnings.push_back("sensitive attribute is constant in the training partition");
  s.linear = fit_logistic(feature_block(s.mask, train), train.y, config.train, 0.0, config.l2);
  return finish_scorer(std::move(s), train, val);
}

}  // namespace pathfair

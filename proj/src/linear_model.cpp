#include "pathfair/linear_model.hpp"

#include <cmath>

namespace pathfair {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || epochs <= 0 || batch_size <= 0)
    throw Error(ErrorKind::config, "train config: learning rate, epochs and batch size must be positive");
  if (patience < 0) throw Error(ErrorKind::config, "train config: patience must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size},       {"seed", seed},
          {"patience", patience},           {"class_weighting", class_weighting},
          {"tolerance", tolerance}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.patience = j.value("patience", c.patience);
  c.class_weighting = j.value("class_weighting", c.class_weighting);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

namespace {

double l1_norm(const Vector& theta, Index k) { return theta.head(k).cwiseAbs().sum(); }

void soft_threshold(Vector& theta, Index k, double t) {
  for (Index j = 0; j < k; ++j) {
    const double v = theta(j);
    theta(j) = v > t ? v - t : v < -t ? v + t : 0.0;
  }
}

}  // namespace

ProximalResult minimize_proximal(const SmoothObjective& f, Vector theta0,
                                 const ProximalOptions& opts) {
  ProximalResult res;
  const Index k = opts.n_penalized;
  Vector x = std::move(theta0);
  double fx = f(x, nullptr);
  double Fx = fx + opts.l1 * l1_norm(x, k);
  if (!std::isfinite(Fx)) throw Error(ErrorKind::divergence, "objective is not finite at start");
  res.history.push_back(Fx);

  Vector y = x, gy(x.size()), z(x.size()), x_prev = x;
  double t = 1.0;
  double L = 1.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    const double fy = f(y, &gy);
    L = std::max(L * 0.5, 1e-8);
    double fz = 0.0;
    Vector d;
    for (int bt = 0; bt < 100; ++bt) {
      z = y - gy / L;
      soft_threshold(z, k, opts.l1 / L);
      fz = f(z, nullptr);
      d = z - y;
      if (std::isfinite(fz) &&
          fz <= fy + gy.dot(d) + 0.5 * L * d.squaredNorm() + 1e-14 * std::abs(fy))
        break;
      L *= 2.0;
    }
    if (!std::isfinite(fz)) throw Error(ErrorKind::divergence, "objective diverged");
    const double Fz = fz + opts.l1 * l1_norm(z, k);

    x_prev = x;
    const bool improved = Fz <= Fx;
    if (improved) {
      x = z;
      Fx = Fz;
    }
    res.history.push_back(Fx);
    res.iterations = it + 1;

    const double step_norm = L * d.lpNorm<Eigen::Infinity>();
    if (step_norm < opts.tolerance) {
      res.converged = true;
      break;
    }
    if (!improved) {
      // restart momentum from the incumbent
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x + ((t - 1.0) / t_next) * (x - x_prev);
    t = t_next;
  }
  res.theta = std::move(x);
  return res;
}

// ---------------------------------------------------------------------------

Vector LinearModel::decision(const Matrix& features) const {
  if (features.cols() != weights.size())
    throw Error(ErrorKind::schema_mismatch, "linear model expects " +
                                                std::to_string(weights.size()) + " features, got " +
                                                std::to_string(features.cols()));
  return (features * weights).array() + bias;
}

Vector LinearModel::predict_proba(const Matrix& features) const {
  Vector eta = decision(features);
  return eta.unaryExpr([](double v) { return clip(sigmoid(v), kProbClip, 1.0 - kProbClip); });
}

json LinearModel::to_json() const {
  return {{"kind", "linear"},
          {"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
          {"bias", bias},
          {"l1_penalty", l1_penalty},
          {"l2_penalty", l2_penalty},
          {"feature_names", feature_names},
          {"reference_hash", reference_hash}};
}

LinearModel LinearModel::from_json(const json& j) {
  LinearModel m;
  auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<Vector>(w.data(), static_cast<Index>(w.size()));
  m.bias = j.at("bias").get<double>();
  m.l1_penalty = j.value("l1_penalty", 0.0);
  m.l2_penalty = j.value("l2_penalty", 0.0);
  m.feature_names = j.value("feature_names", std::vector<std::string>{});
  m.reference_hash = j.value("reference_hash", std::string{});
  return m;
}

// ---------------------------------------------------------------------------

SmoothObjective logistic_objective(const Matrix& features, const Vector& labels,
                                   const Vector& sample_weights, double l2) {
  const Index p = features.cols();
  const double wsum = sample_weights.sum();
  return [&features, &labels, &sample_weights, l2, p, wsum](const Vector& theta,
                                                             Vector* grad) -> double {
    const auto beta = theta.head(p);
    const double b = theta(p);
    const Vector eta = (features * beta).array() + b;
    double loss = 0.0;
    Vector resid(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      const double e = eta(i);
      // softplus(e) - y e, computed stably
      const double sp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      loss += sample_weights(i) * (sp - labels(i) * e);
      resid(i) = sample_weights(i) * (sigmoid(e) - labels(i));
    }
    loss /= wsum;
    loss += 0.5 * l2 * beta.squaredNorm();
    if (grad) {
      grad->resize(p + 1);
      grad->head(p) = features.transpose() * resid / wsum + l2 * beta;
      (*grad)(p) = resid.sum() / wsum;
    }
    return loss;
  };
}

namespace {

Vector default_weights(const Vector& labels, const TrainConfig& config) {
  Vector w = Vector::Ones(labels.size());
  if (!config.class_weighting) return w;
  const double pos = labels.sum();
  const double neg = static_cast<double>(labels.size()) - pos;
  for (Index i = 0; i < labels.size(); ++i)
    w(i) = 0.5 * static_cast<double>(labels.size()) *
           (labels(i) / std::max(pos, 1e-12) + (1.0 - labels(i)) / std::max(neg, 1e-12));
  return w;
}

}  // namespace

LinearModel fit_logistic_penalized(const Matrix& features, const Vector& labels,
                                   const TrainConfig& config, double l1, double l2,
                                   const SmoothObjective& penalty, const Vector* sample_weights) {
  config.validate();
  if (features.rows() != labels.size())
    throw Error(ErrorKind::schema_mismatch, "fit_logistic: rows do not match labels");
  if (labels.size() == 0 || labels.maxCoeff() == labels.minCoeff())
    throw Error(ErrorKind::degenerate_fit, "fit_logistic: labels contain a single class");
  if (l1 < 0 || l2 < 0) throw Error(ErrorKind::config, "fit_logistic: penalties must be >= 0");

  const Vector weights = sample_weights ? *sample_weights : default_weights(labels, config);
  const Index p = features.cols();
  SmoothObjective objective = logistic_objective(features, labels, weights, l2);
  if (penalty) {
    objective = [base = std::move(objective), &penalty](const Vector& theta, Vector* grad) {
      if (!grad) return base(theta, nullptr) + penalty(theta, nullptr);
      Vector extra;
      const double v = base(theta, grad) + penalty(theta, &extra);
      *grad += extra;
      return v;
    };
  }

  Vector theta0 = Vector::Zero(p + 1);
  Rng rng = make_rng(config.seed, 0x10617);
  for (Index j = 0; j < p; ++j) theta0(j) = 0.01 * standard_normal(rng);

  ProximalOptions opts;
  opts.l1 = l1;
  opts.n_penalized = p;
  opts.max_iter = config.epochs;
  opts.tolerance = config.tolerance;
  ProximalResult res = minimize_proximal(objective, theta0, opts);
  if (!res.theta.allFinite()) throw Error(ErrorKind::divergence, "fit_logistic: parameters diverged");

  LinearModel m;
  m.weights = res.theta.head(p);
  m.bias = res.theta(p);
  m.l1_penalty = l1;
  m.l2_penalty = l2;
  m.loss_history = std::move(res.history);
  return m;
}

LinearModel fit_logistic(const Matrix& features, const Vector& labels, const TrainConfig& config,
                         double l1, double l2, const Vector* sample_weights) {
  return fit_logistic_penalized(features, labels, config, l1, l2, SmoothObjective{},
                                sample_weights);
}

}  // namespace pathfair

#include "pathfair/network.hpp"

#include <cmath>

namespace pathfair {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw Error(ErrorKind::config, "unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
  }
  return "linear";
}

DenseNetwork DenseNetwork::random(const std::vector<Index>& widths,
                                  const std::vector<Activation>& activations, Rng& rng) {
  if (widths.size() < 2 || activations.size() != widths.size() - 1)
    throw Error(ErrorKind::config, "network: need one activation per layer");
  DenseNetwork net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weight.resize(widths[l + 1], widths[l]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(widths[l], 1)));
    for (Index c = 0; c < layer.weight.cols(); ++c)
      for (Index r = 0; r < layer.weight.rows(); ++r)
        layer.weight(r, c) = scale * standard_normal(rng);
    layer.bias = Vector::Zero(widths[l + 1]);
    layer.activation = activations[l];
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

namespace {

void activate(Matrix& m, Activation a) {
  switch (a) {
    case Activation::tanh: m = m.array().tanh(); break;
    case Activation::relu: m = m.cwiseMax(0.0); break;
    case Activation::linear: break;
  }
}

}  // namespace

Matrix DenseNetwork::forward(const Matrix& input) const {
  Matrix h = input;
  for (const auto& layer : layers_) {
    Matrix next = h * layer.weight.transpose();
    next.rowwise() += layer.bias.transpose();
    activate(next, layer.activation);
    h = std::move(next);
  }
  return h;
}

Matrix DenseNetwork::forward(const Matrix& input, Tape& tape) const {
  tape.outputs.clear();
  tape.outputs.push_back(input);
  for (const auto& layer : layers_) {
    Matrix next = tape.outputs.back() * layer.weight.transpose();
    next.rowwise() += layer.bias.transpose();
    activate(next, layer.activation);
    tape.outputs.push_back(std::move(next));
  }
  return tape.outputs.back();
}

Index DenseNetwork::param_count() const {
  Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Vector DenseNetwork::flatten() const {
  Vector out(param_count());
  Index pos = 0;
  for (const auto& l : layers_) {
    out.segment(pos, l.weight.size()) = Eigen::Map<const Vector>(l.weight.data(), l.weight.size());
    pos += l.weight.size();
    out.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return out;
}

void DenseNetwork::assign(const Vector& params) {
  if (params.size() != param_count())
    throw Error(ErrorKind::schema_mismatch, "network: parameter vector has wrong length");
  Index pos = 0;
  for (auto& l : layers_) {
    Eigen::Map<Vector>(l.weight.data(), l.weight.size()) = params.segment(pos, l.weight.size());
    pos += l.weight.size();
    l.bias = params.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

double DenseNetwork::weight_norm2(Vector* grad) const {
  double total = 0.0;
  Index pos = 0;
  for (const auto& l : layers_) {
    total += l.weight.squaredNorm();
    if (grad)
      grad->segment(pos, l.weight.size()) +=
          2.0 * Eigen::Map<const Vector>(l.weight.data(), l.weight.size());
    pos += l.weight.size() + l.bias.size();
  }
  return total;
}

Matrix DenseNetwork::backward(const Tape& tape, const Matrix& grad_output, Vector& grad) const {
  std::vector<Index> offsets;
  Index pos = 0;
  for (const auto& l : layers_) {
    offsets.push_back(pos);
    pos += l.weight.size() + l.bias.size();
  }
  Matrix g = grad_output;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const Matrix& out = tape.outputs[li + 1];
    switch (layer.activation) {
      case Activation::tanh: g.array() *= 1.0 - out.array().square(); break;
      case Activation::relu: g.array() *= (out.array() > 0.0).cast<double>(); break;
      case Activation::linear: break;
    }
    const Matrix dW = g.transpose() * tape.outputs[li];
    const Index off = offsets[li];
    grad.segment(off, dW.size()) += Eigen::Map<const Vector>(dW.data(), dW.size());
    grad.segment(off + dW.size(), layer.bias.size()) += g.colwise().sum().transpose();
    g = g * layer.weight;
  }
  return g;
}

json DenseNetwork::to_json() const {
  json layers = json::array();
  for (const auto& l : layers_) {
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())},
                      {"activation", to_string(l.activation)}});
  }
  return {{"layers", layers}};
}

DenseNetwork DenseNetwork::from_json(const json& j) {
  DenseNetwork net;
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    const auto rows = lj.at("rows").get<Index>();
    const auto cols = lj.at("cols").get<Index>();
    auto w = lj.at("weight").get<std::vector<double>>();
    auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Index>(w.size()) != rows * cols || static_cast<Index>(b.size()) != rows)
      throw Error(ErrorKind::schema_mismatch, "network JSON: inconsistent layer shape");
    l.weight = Eigen::Map<Matrix>(w.data(), rows, cols);
    l.bias = Eigen::Map<Vector>(b.data(), rows);
    l.activation = activation_from_string(lj.at("activation").get<std::string>());
    net.layers_.push_back(std::move(l));
  }
  return net;
}

// ---------------------------------------------------------------------------

MinibatchResult train_minibatch(
    Vector params, Index n_rows,
    const std::function<double(const Vector&, std::span<const Index>, Vector*)>& batch_loss,
    const std::function<double(const Vector&)>& validation_loss, const TrainConfig& config) {
  config.validate();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  MinibatchResult res;
  Vector m = Vector::Zero(params.size());
  Vector v = Vector::Zero(params.size());
  Vector grad(params.size());
  Vector best = params;
  double best_val = validation_loss ? validation_loss(params) : 0.0;
  int since_best = 0;
  long step = 0;

  IndexList order(static_cast<std::size_t>(n_rows));
  for (Index i = 0; i < n_rows; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(config.seed, 0xe90c, static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);
    double total = 0.0;
    int batches = 0;
    for (Index start = 0; start < n_rows; start += config.batch_size) {
      const Index len = std::min(config.batch_size, n_rows - start);
      std::span<const Index> batch(order.data() + start, static_cast<std::size_t>(len));
      grad.setZero();
      const double loss = batch_loss(params, batch, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw Error(ErrorKind::divergence, "mini-batch training diverged at epoch " +
                                               std::to_string(epoch));
      total += loss;
      ++batches;
      ++step;
      m = beta1 * m + (1 - beta1) * grad;
      v = beta2 * v + (1 - beta2) * grad.cwiseProduct(grad);
      const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
      params.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    res.train_loss.push_back(total / std::max(batches, 1));
    res.epochs_run = epoch + 1;
    if (validation_loss) {
      const double vl = validation_loss(params);
      res.val_loss.push_back(vl);
      if (vl < best_val) {
        best_val = vl;
        best = params;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        break;
      }
    }
  }
  res.params = validation_loss ? best : params;
  return res;
}

// ---------------------------------------------------------------------------

Vector MlpModel::predict_proba(const Matrix& features) const {
  if (features.cols() != net.input_dim())
    throw Error(ErrorKind::schema_mismatch, "mlp expects " + std::to_string(net.input_dim()) +
                                                " features, got " + std::to_string(features.cols()));
  const Matrix logits = net.forward(features);
  return logits.col(0).unaryExpr(
      [](double v) { return clip(sigmoid(v), kProbClip, 1.0 - kProbClip); });
}

json MlpModel::to_json() const {
  return {{"kind", "mlp"}, {"net", net.to_json()}, {"l2_penalty", l2_penalty}};
}

MlpModel MlpModel::from_json(const json& j) {
  return {DenseNetwork::from_json(j.at("net")), j.value("l2_penalty", 0.0)};
}

double mlp_loss(DenseNetwork& net, const Vector& params, const Matrix& features,
                const Vector& labels, double l2, Vector* grad) {
  net.assign(params);
  DenseNetwork::Tape tape;
  const Matrix logits = net.forward(features, tape);
  const auto n = static_cast<double>(features.rows());
  double loss = 0.0;
  Matrix g(features.rows(), 1);
  for (Index i = 0; i < features.rows(); ++i) {
    const double e = logits(i, 0);
    const double sp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    loss += sp - labels(i) * e;
    g(i, 0) = (sigmoid(e) - labels(i)) / n;
  }
  loss /= n;
  if (grad) {
    grad->setZero(net.param_count());
    net.backward(tape, g, *grad);
    Vector reg = Vector::Zero(grad->size());
    loss += 0.5 * l2 * net.weight_norm2(&reg);
    *grad += 0.5 * l2 * reg;
  } else {
    loss += 0.5 * l2 * net.weight_norm2(nullptr);
  }
  return loss;
}

MlpModel fit_mlp(const Matrix& features, const Vector& labels, const MlpOptions& options,
                 const TrainConfig& config, const Matrix* val_features, const Vector* val_labels) {
  if (features.rows() != labels.size())
    throw Error(ErrorKind::schema_mismatch, "fit_mlp: rows do not match labels");
  if (labels.size() == 0 || labels.maxCoeff() == labels.minCoeff())
    throw Error(ErrorKind::degenerate_fit, "fit_mlp: labels contain a single class");
  std::vector<Index> widths{features.cols()};
  std::vector<Activation> acts;
  for (Index h : options.hidden) {
    widths.push_back(h);
    acts.push_back(options.activation);
  }
  widths.push_back(1);
  acts.push_back(Activation::linear);
  Rng rng = make_rng(config.seed, 0x3ca7);
  DenseNetwork net = DenseNetwork::random(widths, acts, rng);

  DenseNetwork work = net;
  auto batch_loss = [&](const Vector& params, std::span<const Index> rows, Vector* grad) {
    const Matrix xb = take_rows(features, rows);
    const Vector yb = take(labels, rows);
    return mlp_loss(work, params, xb, yb, options.l2, grad);
  };
  std::function<double(const Vector&)> val_loss;
  DenseNetwork val_net = net;
  if (val_features && val_labels && val_features->rows() > 0)
    val_loss = [&](const Vector& params) {
      return mlp_loss(val_net, params, *val_features, *val_labels, 0.0, nullptr);
    };
  MinibatchResult res = train_minibatch(net.flatten(), features.rows(), batch_loss, val_loss, config);
  net.assign(res.params);
  return {std::move(net), options.l2};
}

// ---------------------------------------------------------------------------

json Autoencoder::to_json() const {
  return {{"encoder", encoder.to_json()}, {"decoder", decoder.to_json()},
          {"latent_dim", latent_dim},     {"train_mse", train_mse},
          {"val_mse", val_mse}};
}

Autoencoder Autoencoder::from_json(const json& j) {
  Autoencoder a;
  a.encoder = DenseNetwork::from_json(j.at("encoder"));
  a.decoder = DenseNetwork::from_json(j.at("decoder"));
  a.latent_dim = j.at("latent_dim").get<Index>();
  a.train_mse = j.value("train_mse", 0.0);
  a.val_mse = j.value("val_mse", 0.0);
  return a;
}

double autoencoder_loss(DenseNetwork& encoder, DenseNetwork& decoder, const Vector& params,
                        const Matrix& w, Vector* grad) {
  const Index ne = encoder.param_count();
  encoder.assign(params.head(ne));
  decoder.assign(params.tail(decoder.param_count()));
  DenseNetwork::Tape te, td;
  const Matrix latent = encoder.forward(w, te);
  const Matrix recon = decoder.forward(latent, td);
  const Matrix diff = recon - w;
  const auto count = static_cast<double>(w.size());
  const double loss = diff.squaredNorm() / count;
  if (grad) {
    grad->setZero(params.size());
    Vector gd = Vector::Zero(decoder.param_count());
    const Matrix g_latent = decoder.backward(td, 2.0 * diff / count, gd);
    Vector ge = Vector::Zero(ne);
    encoder.backward(te, g_latent, ge);
    grad->head(ne) = ge;
    grad->tail(gd.size()) = gd;
  }
  return loss;
}

Autoencoder fit_autoencoder(const Matrix& w, Index latent_dim, const TrainConfig& config,
                            const AutoencoderOptions& options) {
  if (latent_dim < 1 || latent_dim > w.cols())
    throw Error(ErrorKind::config, "autoencoder latent dimension " + std::to_string(latent_dim) +
                                       " must lie in [1, " + std::to_string(w.cols()) + "]");
  const Index hidden = std::max(options.hidden_width, latent_dim);
  Rng rng = make_rng(config.seed, 0xae);
  Autoencoder ae;
  ae.latent_dim = latent_dim;
  ae.encoder = DenseNetwork::random({w.cols(), hidden, latent_dim},
                                    {options.activation, Activation::linear}, rng);
  ae.decoder = DenseNetwork::random({latent_dim, hidden, w.cols()},
                                    {options.activation, Activation::linear}, rng);

  IndexList rows(static_cast<std::size_t>(w.rows()));
  for (Index i = 0; i < w.rows(); ++i) rows[static_cast<std::size_t>(i)] = i;
  Rng split_rng = make_rng(config.seed, 0xae5);
  shuffle(rows, split_rng);
  const auto n_val = static_cast<Index>(std::floor(options.validation_fraction * static_cast<double>(w.rows())));
  const bool holdout = n_val >= 1 && w.rows() - n_val >= 2;
  IndexList val_rows, train_rows;
  for (std::size_t k = 0; k < rows.size(); ++k)
    (holdout && static_cast<Index>(k) < n_val ? val_rows : train_rows).push_back(rows[k]);
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  const Matrix train = take_rows(w, train_rows);
  const Matrix val = holdout ? take_rows(w, val_rows) : Matrix();

  DenseNetwork enc = ae.encoder, dec = ae.decoder;
  Vector params(ae.encoder.param_count() + ae.decoder.param_count());
  params << ae.encoder.flatten(), ae.decoder.flatten();
  auto batch_loss = [&](const Vector& p, std::span<const Index> batch, Vector* grad) {
    return autoencoder_loss(enc, dec, p, take_rows(train, batch), grad);
  };
  std::function<double(const Vector&)> val_loss;
  DenseNetwork venc = ae.encoder, vdec = ae.decoder;
  if (holdout)
    val_loss = [&](const Vector& p) { return autoencoder_loss(venc, vdec, p, val, nullptr); };
  MinibatchResult res = train_minibatch(params, train.rows(), batch_loss, val_loss, config);

  ae.encoder.assign(res.params.head(ae.encoder.param_count()));
  ae.decoder.assign(res.params.tail(ae.decoder.param_count()));
  ae.train_mse = (ae.reconstruct(train) - train).squaredNorm() / static_cast<double>(train.size());
  ae.val_mse = holdout ? (ae.reconstruct(val) - val).squaredNorm() / static_cast<double>(val.size())
                       : ae.train_mse;
  return ae;
}

}  // namespace pathfair

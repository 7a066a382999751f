#pragma once

#include "pathfair/common.hpp"
#include "pathfair/linear_model.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace pathfair {

enum class Activation { tanh, relu, linear };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::tanh;
};

/// Fully connected feed-forward network; rows of the input are samples.
class DenseNetwork {
 public:
  DenseNetwork() = default;

  /// widths = {input, hidden..., output}; one activation per layer. Weights are
  /// N(0, 1/fan_in), biases zero.
  static DenseNetwork random(const std::vector<Index>& widths,
                             const std::vector<Activation>& activations, Rng& rng);

  struct Tape {
    std::vector<Matrix> outputs;  // outputs[0] is the input
  };

  Matrix forward(const Matrix& input) const;
  Matrix forward(const Matrix& input, Tape& tape) const;

  /// Given dLoss/dOutput, accumulates parameter gradients into `grad` (flattened
  /// in `flatten()` order, must be sized param_count()) and returns dLoss/dInput.
  Matrix backward(const Tape& tape, const Matrix& grad_output, Vector& grad) const;

  Index input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
  Index output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }
  Index param_count() const;
  Vector flatten() const;
  void assign(const Vector& params);
  /// Sum of squared weights (biases excluded) and its gradient added to `grad`.
  double weight_norm2(Vector* grad) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  nlohmann::json to_json() const;
  static DenseNetwork from_json(const nlohmann::json& j);

 private:
  std::vector<DenseLayer> layers_;
};

/// Mini-batch Adam over a flattened parameter vector. `batch_loss` returns the
/// loss over the given rows and writes its gradient; `validation_loss` (optional)
/// drives early stopping and the best parameters seen are returned.
struct MinibatchResult {
  Vector params;
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;
  int epochs_run = 0;
};

MinibatchResult train_minibatch(
    Vector params, Index n_rows,
    const std::function<double(const Vector&, std::span<const Index>, Vector*)>& batch_loss,
    const std::function<double(const Vector&)>& validation_loss, const TrainConfig& config);

/// Feed-forward classifier with sigmoid output.
struct MlpModel {
  DenseNetwork net;  // final layer linear, produces the logit
  double l2_penalty = 0.0;

  Index width() const { return net.input_dim(); }
  Vector predict_proba(const Matrix& features) const;

  nlohmann::json to_json() const;
  static MlpModel from_json(const nlohmann::json& j);
};

struct MlpOptions {
  std::vector<Index> hidden{32};
  Activation activation = Activation::tanh;
  double l2 = 1e-4;
};

/// Mean BCE + (l2/2)|W|^2 for `net` with its parameters replaced by `params`.
double mlp_loss(DenseNetwork& net, const Vector& params, const Matrix& features,
                const Vector& labels, double l2, Vector* grad);

MlpModel fit_mlp(const Matrix& features, const Vector& labels, const MlpOptions& options,
                 const TrainConfig& config, const Matrix* val_features = nullptr,
                 const Vector* val_labels = nullptr);

/// Two-layer encoder and two-layer decoder trained on mean squared reconstruction error.
struct Autoencoder {
  DenseNetwork encoder;
  DenseNetwork decoder;
  Index latent_dim = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;

  Matrix encode(const Matrix& w) const { return encoder.forward(w); }
  Matrix reconstruct(const Matrix& w) const { return decoder.forward(encoder.forward(w)); }

  nlohmann::json to_json() const;
  static Autoencoder from_json(const nlohmann::json& j);
};

struct AutoencoderOptions {
  Index hidden_width = 64;  // raised to latent_dim when smaller
  Activation activation = Activation::tanh;
  double validation_fraction = 0.2;
};

/// Reconstruction loss over the concatenated encoder+decoder parameters.
double autoencoder_loss(DenseNetwork& encoder, DenseNetwork& decoder, const Vector& params,
                        const Matrix& w, Vector* grad);

/// Throws ErrorKind::config when latent_dim is 0 or exceeds the input width.
Autoencoder fit_autoencoder(const Matrix& w, Index latent_dim, const TrainConfig& config,
                            const AutoencoderOptions& options = {});

}  // namespace pathfair

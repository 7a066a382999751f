#pragma once

#include "pathfair/common.hpp"
#include "pathfair/network.hpp"
#include "pathfair/sfm_data.hpp"

#include <json.hpp>

#include <filesystem>

namespace pathfair {

enum class NoiseKind { gaussian, uniform };
enum class TruthSource { probabilities, realizations };

/// Synthetic standard-fairness-model world. Every edge is a randomly initialized
/// tanh MLP: latent U -> Z, U -> X, (X, Z) -> W, (X, Z, W) -> P(Y = 1).
struct ScmSpec {
  Index dim_z = 10;
  Index dim_w = 40;
  Index hidden_width = 64;
  int n_hidden_layers = 2;
  /// Loading of the shared latent in the X generator, in [0, 1].
  double xz_association = 0.5;
  /// Multiplier on the X input weights of the Y edge.
  double direct_effect_scale = 1.0;
  /// Multiplier on the X input weights of the W edge.
  double indirect_effect_scale = 1.0;
  double noise_sd = 1.0;
  /// Added to the Y-edge logit; shifts the outcome base rate.
  double outcome_bias = 0.0;
  NoiseKind w_noise = NoiseKind::gaussian;
  TruthSource truth_source = TruthSource::probabilities;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ScmSpec from_json(const nlohmann::json& j);
};

struct ScmWorld {
  ScmSpec spec;
  DenseNetwork z_edge;  // U -> Z (before additive noise)
  DenseNetwork x_edge;  // U -> X logit contribution; all zero when xz_association = 0
  double x_bias = 0.0;
  DenseNetwork w_edge;  // [x, z] -> W (before additive noise)
  DenseNetwork y_edge;  // [x, z, w] -> Y logit (outcome_bias added afterwards)

  /// P(X = 1) over the world's calibration draws.
  double x_marginal = 0.5;
};

/// Realized draws for every unit under shared exogenous noise.
/// Arm (a, b) means X set to a with mediators taken from W under X = b.
struct CounterfactualPanel {
  Matrix z;
  Vector x;
  Matrix w;           // observational, equals w0 or w1 by x
  Vector y;           // observational
  Vector p_obs;       // P(Y = 1) for the observational arm
  Matrix w0, w1;      // counterfactual mediators W_{x0}, W_{x1}
  Vector p00, p10, p01, p11;  // arm probabilities p[a][b] = P(Y_{a, W_b} = 1)
  Vector y00, y10, y01, y11;  // Bernoulli realizations sharing one uniform per unit
  bool has_probabilities = true;

  Index n() const { return x.size(); }
  const Vector& prob(int a, int b) const;
  const Vector& outcome(int a, int b) const;
};

/// Point effects; nie uses the sign for which te = nde + nie.
struct EffectTriple {
  double te = 0.0;
  double nde = 0.0;
  double nie = 0.0;
  double se = 0.0;

  /// P(y_{x1, W_x0}) - P(y_{x1}), the opposite sign of `nie`.
  double nie_opposite_sign() const { return -nie; }
  nlohmann::json to_json() const;
};

/// Ground truth with Monte-Carlo standard errors of each effect.
struct TrueEffects {
  EffectTriple effects;
  EffectTriple mc_se;
  nlohmann::json to_json() const;
};

ScmWorld init_scm(const ScmSpec& spec);

/// Draws n units. `stream` selects an independent panel from the same world;
/// unit i uses random stream (seed, stream, i), so results do not depend on
/// thread count.
CounterfactualPanel sample_panel(const ScmWorld& world, Index n, std::uint64_t stream = 1);

/// Throws ErrorKind::data when an x group is empty.
TrueEffects true_effects(const CounterfactualPanel& panel,
                         TruthSource source = TruthSource::probabilities);

/// Observational projection (x, z, w, y) as a dataset with synthetic provenance.
SfmDataset observational_dataset(const CounterfactualPanel& panel);

void write_panel_csv(const CounterfactualPanel& panel, const std::filesystem::path& path);

}  // namespace pathfair

#include "pathfair/synthgen.hpp"

#include "pathfair/csv.hpp"

#include <cmath>
#include <fstream>

namespace pathfair {

using nlohmann::json;

namespace {

// Scale of the latent loading in the X generator at xz_association = 1, in
// units of the latent signal's standard deviation.
constexpr double kXzGain = 2.0;
constexpr Index kCalibrationDraws = 4096;

enum Stream : std::uint64_t {
  kZEdge = 1,
  kXEdge = 2,
  kWEdge = 3,
  kYEdge = 4,
  kXBias = 5,
  kCalibration = 6,
  kPanel = 100,
};

std::string noise_name(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "uniform"; }

}  // namespace

void ScmSpec::validate() const {
  if (dim_z < 1 || dim_w < 1) throw Error(ErrorKind::config, "scm: dim_z and dim_w must be >= 1");
  if (hidden_width < 1 || n_hidden_layers < 1)
    throw Error(ErrorKind::config, "scm: hidden_width and n_hidden_layers must be >= 1");
  if (!(xz_association >= 0.0 && xz_association <= 1.0))
    throw Error(ErrorKind::config, "scm: xz_association must lie in [0, 1]");
  if (!(std::isfinite(direct_effect_scale) && direct_effect_scale >= 0.0) ||
      !(std::isfinite(indirect_effect_scale) && indirect_effect_scale >= 0.0))
    throw Error(ErrorKind::config, "scm: effect scales must be finite and >= 0");
  if (!(std::isfinite(noise_sd) && noise_sd > 0.0))
    throw Error(ErrorKind::config, "scm: noise_sd must be positive");
  if (!std::isfinite(outcome_bias)) throw Error(ErrorKind::config, "scm: outcome_bias must be finite");
}

json ScmSpec::to_json() const {
  return {{"dim_z", dim_z},
          {"dim_w", dim_w},
          {"hidden_width", hidden_width},
          {"n_hidden_layers", n_hidden_layers},
          {"xz_association", xz_association},
          {"direct_effect_scale", direct_effect_scale},
          {"indirect_effect_scale", indirect_effect_scale},
          {"noise_sd", noise_sd},
          {"outcome_bias", outcome_bias},
          {"w_noise", noise_name(w_noise)},
          {"truth_source", truth_source == TruthSource::probabilities ? "probabilities" : "realizations"},
          {"seed", seed}};
}

ScmSpec ScmSpec::from_json(const json& j) {
  try {
    ScmSpec s;
    s.dim_z = j.value("dim_z", s.dim_z);
    s.dim_w = j.value("dim_w", s.dim_w);
    s.hidden_width = j.value("hidden_width", s.hidden_width);
    s.n_hidden_layers = j.value("n_hidden_layers", s.n_hidden_layers);
    s.xz_association = j.value("xz_association", s.xz_association);
    s.direct_effect_scale = j.value("direct_effect_scale", s.direct_effect_scale);
    s.indirect_effect_scale = j.value("indirect_effect_scale", s.indirect_effect_scale);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.outcome_bias = j.value("outcome_bias", s.outcome_bias);
    const std::string noise = j.value("w_noise", std::string("gaussian"));
    if (noise != "gaussian" && noise != "uniform")
      throw Error(ErrorKind::config, "scm: w_noise must be gaussian or uniform");
    s.w_noise = noise == "gaussian" ? NoiseKind::gaussian : NoiseKind::uniform;
    const std::string truth = j.value("truth_source", std::string("probabilities"));
    if (truth != "probabilities" && truth != "realizations")
      throw Error(ErrorKind::config, "scm: truth_source must be probabilities or realizations");
    s.truth_source = truth == "probabilities" ? TruthSource::probabilities : TruthSource::realizations;
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("scm spec: ") + e.what());
  }
}

json EffectTriple::to_json() const {
  return {{"te", te}, {"nde", nde}, {"nie", nie}, {"se", se}, {"nie_appendixA", nie_opposite_sign()}};
}

json TrueEffects::to_json() const {
  json j = effects.to_json();
  j["mc_se"] = {{"te", mc_se.te}, {"nde", mc_se.nde}, {"nie", mc_se.nie}, {"se", mc_se.se}};
  return j;
}

const Vector& CounterfactualPanel::prob(int a, int b) const {
  return a ? (b ? p11 : p10) : (b ? p01 : p00);
}

const Vector& CounterfactualPanel::outcome(int a, int b) const {
  return a ? (b ? y11 : y10) : (b ? y01 : y00);
}

// ---------------------------------------------------------------------------

namespace {

DenseNetwork edge_network(Index in, Index out, const ScmSpec& spec, Rng& rng) {
  std::vector<Index> widths{in};
  std::vector<Activation> acts;
  for (int l = 0; l < spec.n_hidden_layers; ++l) {
    widths.push_back(spec.hidden_width);
    acts.push_back(Activation::tanh);
  }
  widths.push_back(out);
  acts.push_back(Activation::linear);
  return DenseNetwork::random(widths, acts, rng);
}

Matrix latent_draws(Index n, Index dim, std::uint64_t seed) {
  Matrix u(n, dim);
  for (Index i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, kCalibration, static_cast<std::uint64_t>(i));
    for (Index j = 0; j < dim; ++j) u(i, j) = standard_normal(rng);
  }
  return u;
}

Matrix with_x(double x, const Matrix& rest) {
  Matrix out(rest.rows(), rest.cols() + 1);
  out.col(0).setConstant(x);
  out.rightCols(rest.cols()) = rest;
  return out;
}

}  // namespace

ScmWorld init_scm(const ScmSpec& spec) {
  spec.validate();
  ScmWorld world;
  world.spec = spec;
  const Index latent = spec.dim_z;

  Rng rz = make_rng(spec.seed, kZEdge);
  world.z_edge = edge_network(latent, spec.dim_z, spec, rz);

  Rng rx = make_rng(spec.seed, kXEdge);
  world.x_edge = edge_network(latent, 1, spec, rx);

  Rng rw = make_rng(spec.seed, kWEdge);
  world.w_edge = edge_network(1 + spec.dim_z, spec.dim_w, spec, rw);
  world.w_edge.layers().front().weight.col(0) *= spec.indirect_effect_scale;

  Rng ry = make_rng(spec.seed, kYEdge);
  world.y_edge = edge_network(1 + spec.dim_z + spec.dim_w, 1, spec, ry);
  world.y_edge.layers().front().weight.col(0) *= spec.direct_effect_scale;

  // Normalize the latent signal of the X generator to unit variance, then fold
  // the loading into its output layer.
  const Matrix calib = latent_draws(kCalibrationDraws, latent, spec.seed);
  Vector h = world.x_edge.forward(calib).col(0);
  const double h_mean = h.mean();
  const double h_sd = std::sqrt((h.array() - h_mean).square().mean());
  const double loading = spec.xz_association * kXzGain / (h_sd > 1e-12 ? h_sd : 1.0);
  auto& out_layer = world.x_edge.layers().back();
  out_layer.weight *= loading;
  out_layer.bias = (out_layer.bias.array() - h_mean) * loading;
  h = world.x_edge.forward(calib).col(0);

  auto marginal = [&](double bias) {
    double s = 0.0;
    for (Index i = 0; i < h.size(); ++i) s += sigmoid(h(i) + bias);
    return s / static_cast<double>(h.size());
  };
  Rng rb = make_rng(spec.seed, kXBias);
  double bias = 0.0;
  double pm = 0.0;
  bool accepted = false;
  for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
    bias = 0.75 * standard_normal(rb);
    pm = marginal(bias);
    accepted = pm >= 0.3 && pm <= 0.7;
  }
  if (!accepted) {
    double lo = -20.0, hi = 20.0;
    for (int it = 0; it < 200; ++it) {
      bias = 0.5 * (lo + hi);
      (marginal(bias) < 0.5 ? lo : hi) = bias;
    }
    pm = marginal(bias);
  }
  world.x_bias = bias;
  world.x_marginal = pm;
  return world;
}

CounterfactualPanel sample_panel(const ScmWorld& world, Index n, std::uint64_t stream) {
  const ScmSpec& spec = world.spec;
  if (n < 1) throw Error(ErrorKind::config, "sample_panel: n must be >= 1");
  const Index latent = spec.dim_z;
  Matrix u(n, latent), ez(n, spec.dim_z), ew(n, spec.dim_w);
  Vector ux(n), uy(n);
  const double uniform_scale = std::sqrt(3.0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    const auto i = static_cast<Index>(k);
    Rng rng = make_rng(spec.seed, kPanel + stream, k);
    for (Index j = 0; j < latent; ++j) u(i, j) = standard_normal(rng);
    for (Index j = 0; j < spec.dim_z; ++j) ez(i, j) = standard_normal(rng);
    ux(i) = uniform01(rng);
    for (Index j = 0; j < spec.dim_w; ++j)
      ew(i, j) = spec.w_noise == NoiseKind::gaussian
                     ? standard_normal(rng)
                     : uniform_scale * (2.0 * uniform01(rng) - 1.0);
    uy(i) = uniform01(rng);
  });

  CounterfactualPanel p;
  p.z = world.z_edge.forward(u) + spec.noise_sd * ez;
  const Vector x_logit = world.x_edge.forward(u).col(0).array() + world.x_bias;
  p.x.resize(n);
  for (Index i = 0; i < n; ++i) p.x(i) = ux(i) < sigmoid(x_logit(i)) ? 1.0 : 0.0;

  p.w0 = world.w_edge.forward(with_x(0.0, p.z)) + spec.noise_sd * ew;
  p.w1 = world.w_edge.forward(with_x(1.0, p.z)) + spec.noise_sd * ew;

  auto arm = [&](double a, const Matrix& wb) {
    Matrix in(n, 1 + spec.dim_z + spec.dim_w);
    in.col(0).setConstant(a);
    in.middleCols(1, spec.dim_z) = p.z;
    in.rightCols(spec.dim_w) = wb;
    const Vector logit = world.y_edge.forward(in).col(0);
    return Vector(logit.unaryExpr([&](double v) { return sigmoid(v + spec.outcome_bias); }));
  };
  p.p00 = arm(0.0, p.w0);
  p.p10 = arm(1.0, p.w0);
  p.p01 = arm(0.0, p.w1);
  p.p11 = arm(1.0, p.w1);

  auto realize = [&](const Vector& prob) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out(i) = uy(i) < prob(i) ? 1.0 : 0.0;
    return out;
  };
  p.y00 = realize(p.p00);
  p.y10 = realize(p.p10);
  p.y01 = realize(p.p01);
  p.y11 = realize(p.p11);

  p.w.resize(n, spec.dim_w);
  p.p_obs.resize(n);
  p.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const bool one = p.x(i) == 1.0;
    p.w.row(i) = one ? p.w1.row(i) : p.w0.row(i);
    p.p_obs(i) = one ? p.p11(i) : p.p00(i);
    p.y(i) = one ? p.y11(i) : p.y00(i);
  }
  return p;
}

TrueEffects true_effects(const CounterfactualPanel& panel, TruthSource source) {
  const Index n = panel.n();
  if (n == 0) throw Error(ErrorKind::data, "true_effects: empty panel");
  const bool use_prob = source == TruthSource::probabilities && panel.has_probabilities;
  const Vector& a00 = use_prob ? panel.p00 : panel.y00;
  const Vector& a10 = use_prob ? panel.p10 : panel.y10;
  const Vector& a11 = use_prob ? panel.p11 : panel.y11;
  const Vector& obs = use_prob ? panel.p_obs : panel.y;

  double n1 = 0, s1 = 0, s0 = 0;
  for (Index i = 0; i < n; ++i) {
    if (panel.x(i) == 1.0) {
      n1 += 1;
      s1 += obs(i);
    } else {
      s0 += obs(i);
    }
  }
  const double n0 = static_cast<double>(n) - n1;
  if (n1 == 0 || n0 == 0) throw Error(ErrorKind::data, "true_effects: spurious effect undefined, an x group is empty");
  const double m00 = a00.mean(), m10 = a10.mean(), m11 = a11.mean();
  const double obs1 = s1 / n1, obs0 = s0 / n0;

  TrueEffects out;
  out.effects.nde = m10 - m00;
  out.effects.nie = m11 - m10;
  out.effects.te = out.effects.nde + out.effects.nie;
  out.effects.se = (obs1 - m11) - (obs0 - m00);

  const auto dn = static_cast<double>(n);
  auto se_of = [&](const Vector& contrib) {
    const double mu = contrib.mean();
    return std::sqrt((contrib.array() - mu).square().sum() / (dn - 1.0 > 0 ? dn - 1.0 : 1.0) / dn);
  };
  const double pi1 = n1 / dn, pi0 = n0 / dn;
  Vector phi(n);
  for (Index i = 0; i < n; ++i) {
    const double xi = panel.x(i);
    phi(i) = xi / pi1 * (obs(i) - obs1) - (1.0 - xi) / pi0 * (obs(i) - obs0) -
             (a11(i) - a00(i) - (m11 - m00));
  }
  out.mc_se.nde = se_of(a10 - a00);
  out.mc_se.nie = se_of(a11 - a10);
  out.mc_se.te = se_of(a11 - a00);
  out.mc_se.se = se_of(phi);
  return out;
}

SfmDataset observational_dataset(const CounterfactualPanel& panel) {
  SfmDataset d;
  d.x = panel.x;
  d.y = panel.y;
  d.z = panel.z;
  d.w = panel.w;
  for (Index j = 0; j < panel.z.cols(); ++j) d.z_names.push_back("z" + std::to_string(j + 1));
  for (Index j = 0; j < panel.w.cols(); ++j) d.w_names.push_back("w" + std::to_string(j + 1));
  d.z_demographic.assign(static_cast<std::size_t>(panel.z.cols()), false);
  d.provenance = Provenance::synthetic;
  return d;
}

void write_panel_csv(const CounterfactualPanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  std::vector<std::string> header{"x"};
  for (Index j = 0; j < panel.z.cols(); ++j) header.push_back("z" + std::to_string(j + 1));
  for (Index j = 0; j < panel.w.cols(); ++j) header.push_back("w" + std::to_string(j + 1));
  header.push_back("y");
  for (Index j = 0; j < panel.w.cols(); ++j) header.push_back("w" + std::to_string(j + 1) + "_x0");
  for (Index j = 0; j < panel.w.cols(); ++j) header.push_back("w" + std::to_string(j + 1) + "_x1");
  for (const char* c : {"p_obs", "p_x0_wx0", "p_x1_wx0", "p_x0_wx1", "p_x1_wx1", "y_x0_wx0",
                        "y_x1_wx0", "y_x0_wx1", "y_x1_wx1"})
    header.emplace_back(c);
  csv::write_row(out, header);
  std::vector<std::string> row;
  for (Index i = 0; i < panel.n(); ++i) {
    row.clear();
    row.push_back(format_double(panel.x(i)));
    for (Index j = 0; j < panel.z.cols(); ++j) row.push_back(format_double(panel.z(i, j)));
    for (Index j = 0; j < panel.w.cols(); ++j) row.push_back(format_double(panel.w(i, j)));
    row.push_back(format_double(panel.y(i)));
    for (Index j = 0; j < panel.w.cols(); ++j) row.push_back(format_double(panel.w0(i, j)));
    for (Index j = 0; j < panel.w.cols(); ++j) row.push_back(format_double(panel.w1(i, j)));
    for (const Vector* v : {&panel.p_obs, &panel.p00, &panel.p10, &panel.p01, &panel.p11,
                            &panel.y00, &panel.y10, &panel.y01, &panel.y11})
      row.push_back(format_double((*v)(i)));
    csv::write_row(out, row);
  }
}

}  // namespace pathfair

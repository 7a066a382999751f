#include "pathfair/importance.hpp"
#include "pathfair/linear_model.hpp"
#include "pathfair/network.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace pathfair;
using testing::gradient_relative_error;
using testing::random_matrix;
using testing::random_vector;

TEST_CASE("logistic objective gradient") {
  Rng rng = make_rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix f = random_matrix(40, 5, rng);
    Vector y(40), sw(40);
    for (Index i = 0; i < 40; ++i) {
      y(i) = uniform01(rng);  // soft labels are allowed
      sw(i) = 0.5 + uniform01(rng);
    }
    const SmoothObjective obj = logistic_objective(f, y, sw, 0.3);
    CHECK(gradient_relative_error(obj, random_vector(6, rng)) < 1e-5);
  }
}

TEST_CASE("MLP loss gradient") {
  Rng rng = make_rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    DenseNetwork net = DenseNetwork::random({4, 7, 5, 1}, {Activation::tanh, Activation::tanh, Activation::linear}, rng);
    const Matrix f = random_matrix(30, 4, rng);
    Vector y(30);
    for (Index i = 0; i < 30; ++i) y(i) = static_cast<double>(uniform_index(rng, 2));
    auto obj = [&](const Vector& p, Vector* g) { return mlp_loss(net, p, f, y, 0.1, g); };
    CHECK(gradient_relative_error(obj, random_vector(net.param_count(), rng, 0.5)) < 1e-5);
  }
}

TEST_CASE("autoencoder loss gradient") {
  Rng rng = make_rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    DenseNetwork enc = DenseNetwork::random({6, 5, 2}, {Activation::tanh, Activation::linear}, rng);
    DenseNetwork dec = DenseNetwork::random({2, 5, 6}, {Activation::tanh, Activation::linear}, rng);
    const Matrix w = random_matrix(25, 6, rng);
    auto obj = [&](const Vector& p, Vector* g) { return autoencoder_loss(enc, dec, p, w, g); };
    const Index np = enc.param_count() + dec.param_count();
    CHECK(gradient_relative_error(obj, random_vector(np, rng, 0.5)) < 1e-5);
  }
}

TEST_CASE("network flatten and assign round trip") {
  Rng rng = make_rng(4);
  DenseNetwork net = DenseNetwork::random({3, 4, 1}, {Activation::relu, Activation::linear}, rng);
  const Vector p = random_vector(net.param_count(), rng);
  net.assign(p);
  CHECK(net.flatten() == p);
  const DenseNetwork back = DenseNetwork::from_json(net.to_json());
  const Matrix in = random_matrix(5, 3, rng);
  CHECK(back.forward(in) == net.forward(in));
}

TEST_CASE("logistic fit recovers planted coefficients") {
  Rng rng = make_rng(5);
  const Index n = 20000;
  const Matrix f = random_matrix(n, 3, rng);
  Vector beta(3);
  beta << 1.0, -0.5, 0.0;
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = uniform01(rng) < sigmoid(f.row(i).dot(beta) + 0.3) ? 1.0 : 0.0;
  TrainConfig tc;
  tc.epochs = 500;
  tc.tolerance = 1e-9;
  const LinearModel m = fit_logistic(f, y, tc, 0.0, 0.0);
  CHECK(m.weights(0) == doctest::Approx(1.0).epsilon(0.08));
  CHECK(m.weights(1) == doctest::Approx(-0.5).epsilon(0.1));
  CHECK(std::abs(m.weights(2)) < 0.05);
  CHECK(m.bias == doctest::Approx(0.3).epsilon(0.2));

  const LinearModel sparse = fit_logistic(f, y, tc, 0.05, 0.0);
  CHECK(sparse.weights(2) == 0.0);
  CHECK(sparse.weights(0) != 0.0);

  const LinearModel back = LinearModel::from_json(m.to_json());
  CHECK(back.predict_proba(f) == m.predict_proba(f));
}

TEST_CASE("logistic fit rejects a single label value") {
  Rng rng = make_rng(6);
  try {
    fit_logistic(random_matrix(10, 2, rng), Vector::Ones(10), TrainConfig{}, 0, 0);
    FAIL("expected degenerate fit");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_fit);
  }
}

TEST_CASE("empty penalty leaves the fit unchanged") {
  Rng rng = make_rng(7);
  const Matrix f = random_matrix(200, 3, rng);
  Vector y(200);
  for (Index i = 0; i < 200; ++i) y(i) = f(i, 0) > 0 ? 1.0 : 0.0;
  TrainConfig tc;
  const LinearModel a = fit_logistic(f, y, tc, 0.0, 1e-2);
  const LinearModel b = fit_logistic_penalized(f, y, tc, 0.0, 1e-2, SmoothObjective{});
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
}

TEST_CASE("mlp learns a nonlinear boundary") {
  Rng rng = make_rng(8);
  const Matrix f = random_matrix(2000, 2, rng);
  Vector y(2000);
  for (Index i = 0; i < 2000; ++i) y(i) = f(i, 0) * f(i, 1) > 0 ? 1.0 : 0.0;
  TrainConfig tc;
  tc.epochs = 200;
  tc.learning_rate = 1e-2;
  tc.batch_size = 64;
  MlpOptions opt;
  opt.hidden = {16};
  const MlpModel m = fit_mlp(f, y, opt, tc);
  const Vector p = m.predict_proba(f);
  double correct = 0;
  for (Index i = 0; i < 2000; ++i) correct += (p(i) >= 0.5) == (y(i) == 1.0);
  CHECK(correct / 2000 > 0.9);
}

TEST_CASE("autoencoder reconstructs low-rank data") {
  Rng rng = make_rng(9);
  const Matrix latent = random_matrix(1000, 2, rng);
  const Matrix mix = random_matrix(2, 8, rng);
  const Matrix w = latent * mix;
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 64;
  tc.learning_rate = 1e-2;
  const Autoencoder ae = fit_autoencoder(w, 2, tc);
  const double var = (w.rowwise() - w.colwise().mean()).squaredNorm() / static_cast<double>(w.size());
  CHECK(ae.train_mse < 0.1 * var);
  CHECK(ae.encode(w).cols() == 2);
  CHECK_THROWS_AS(fit_autoencoder(w, 9, tc), Error);
}

TEST_CASE("permutation importance ranks the informative column") {
  Rng rng = make_rng(10);
  const Matrix f = random_matrix(3000, 3, rng);
  Vector y(3000);
  for (Index i = 0; i < 3000; ++i) y(i) = uniform01(rng) < sigmoid(2.0 * f(i, 1)) ? 1.0 : 0.0;
  const LinearModel m = fit_logistic(f, y, TrainConfig{}, 0, 0);
  auto model = [&](const Matrix& x) { return m.predict_proba(x); };
  const Vector imp = permutation_importance(model, f, y, ImportanceMetric::neg_bce, 3, 1);
  CHECK(imp.size() == 3);
  CHECK(imp(1) > 10 * std::abs(imp(0)));
  const IndexList cols{2, 1};
  const Vector sub = permutation_importance(model, f, y, ImportanceMetric::auroc, 3, 1, cols);
  CHECK(sub.size() == 2);
  CHECK(sub(1) > sub(0));
  CHECK(permutation_importance(model, f, y, ImportanceMetric::neg_bce, 3, 1) == imp);
}

TEST_CASE("standardized mean difference") {
  Vector x(4);
  x << 0, 0, 1, 1;
  Matrix w(4, 3);
  w << 0, 1, 5,  //
      2, 1, 5,   //
      2, 3, 5,   //
      4, 3, 5;
  const Vector d = smd(w, x);
  CHECK(d(0) == doctest::Approx(2.0));
  CHECK(std::isinf(d(1)));
  CHECK(d(2) == 0.0);
}

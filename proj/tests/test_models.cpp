#include <doctest.h>

#include <cmath>

#include "dcies/models.hpp"
#include "helpers.hpp"

using namespace dcies;

namespace {

Targets regression(const Vector& v) {
  Targets t;
  t.values = v;
  return t;
}

Targets classes(const std::vector<int>& labels, int n) {
  Targets t;
  t.task = TaskKind::classification;
  t.n_classes = n;
  t.labels = labels;
  return t;
}

}  // namespace

TEST_CASE("least squares recovers a linear map") {
  const Matrix X = testutil::gaussian(400, 3, 1);
  Vector w(3);
  w << 1.5, -2.0, 0.25;
  const Vector y = (X * w).array() + 0.7;
  const auto m = fit_least_squares(X, y);
  CHECK((m.weights().col(0) - w).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(m.bias()(0) == doctest::Approx(0.7).epsilon(1e-8));
}

TEST_CASE("task losses") {
  Matrix pred(2, 1);
  pred << 1.0, 3.0;
  Vector y(2);
  y << 0.0, 1.0;
  CHECK(task_loss(pred, regression(y)) == doctest::Approx(2.5));
  Matrix prob(2, 2);
  prob << 0.5, 0.5, 0.0, 1.0;
  CHECK(task_loss(prob, classes({0, 0}, 2)) ==
        doctest::Approx(0.5 * (std::log(2.0) - std::log(kProbabilityFloor))));
}

TEST_CASE("mlp fits a nonlinear target") {
  const Matrix X = testutil::gaussian(2000, 2, 3);
  Vector y(2000);
  for (Index i = 0; i < 2000; ++i) y(i) = std::sin(2.0 * X(i, 0)) + X(i, 1) * X(i, 1) - 1.0;
  AdamConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 3e-3;
  TrainingDiagnostics diag;
  const auto net = train_mlp(X.topRows(1600), regression(y.head(1600)), X.bottomRows(400), regression(y.tail(400)),
                             {32, 32}, cfg, 5, &diag);
  const double base = (y.tail(400).array() - y.head(1600).mean()).square().mean();
  CHECK(task_loss(net.predict(X.bottomRows(400)), regression(y.tail(400))) < 0.2 * base);
  CHECK(diag.best_epoch >= 1);
  CHECK(diag.best_epoch <= cfg.epochs);

  SUBCASE("same seed reproduces the network") {
    const auto again = train_mlp(X.topRows(1600), regression(y.head(1600)), X.bottomRows(400),
                                 regression(y.tail(400)), {32, 32}, cfg, 5);
    CHECK((again.predict(X) - net.predict(X)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("softmax head separates classes") {
  const Matrix X = testutil::gaussian(1000, 2, 4);
  std::vector<int> labels;
  for (Index i = 0; i < 1000; ++i) labels.push_back(X(i, 0) + 0.5 * X(i, 1) > 0 ? 1 : 0);
  AdamConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  const Targets all = classes(labels, 2);
  const auto net = train_mlp(X, all, Matrix(0, 2), classes({}, 2), {}, cfg, 1);
  const Matrix p = net.predict(X);
  int correct = 0;
  for (Index i = 0; i < 1000; ++i) correct += (p(i, 1) > 0.5) == (labels[static_cast<std::size_t>(i)] == 1);
  CHECK(correct >= 970);
  CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("divergent training is reported") {
  const Matrix X = testutil::gaussian(200, 2, 1) * 1e150;
  const Vector y = X.col(0) * 1e150;
  AdamConfig cfg;
  cfg.epochs = 3;
  CHECK_THROWS_AS(train_mlp(X, regression(y), Matrix(0, 2), regression(Vector()), {4, 4}, cfg, 1), TrainingDiverged);
}

TEST_CASE("parameter count") {
  CHECK(mlp_parameter_count(7, {}, 1) == 8);
  CHECK(mlp_parameter_count(7, {14, 14}, 1) == 7 * 14 + 14 + 14 * 14 + 14 + 14 + 1);
}

TEST_CASE("random features fit a linear target") {
  const Matrix X = testutil::gaussian(3000, 3, 8);
  const Vector y = X * Vector::Constant(3, 0.5);
  RffConfig cfg;
  TrainingDiagnostics diag;
  const auto m = train_rff(X.topRows(2400), regression(y.head(2400)), X.middleRows(2400, 300),
                           regression(y.segment(2400, 300)), 256, cfg, 3, &diag);
  const double loss = task_loss(m.predict(X.bottomRows(300)), regression(y.tail(300)));
  CHECK(loss < 0.01 * y.tail(300).squaredNorm() / 300.0);
  CHECK_FALSE(diag.selected.empty());
}

TEST_CASE("forest stump classifies a sign rule") {
  const Matrix X = testutil::gaussian(2000, 3, 2);
  std::vector<int> labels;
  for (Index i = 0; i < 2000; ++i) labels.push_back(X(i, 1) > 0 ? 1 : 0);
  ForestConfig cfg;
  cfg.max_depth = 1;
  cfg.n_trees = 20;
  cfg.classification_features = MaxFeatures::all;
  const auto f = train_forest(X.topRows(1500), classes(std::vector<int>(labels.begin(), labels.begin() + 1500), 2),
                              cfg, 4);
  const Matrix p = f.predict(X.bottomRows(500));
  int correct = 0;
  for (Index i = 0; i < 500; ++i) {
    // hand-built stump oracle: split on column 1 at zero
    const int oracle = X(1500 + i, 1) > 0 ? 1 : 0;
    const int pred = p(i, 1) > p(i, 0) ? 1 : 0;
    correct += pred == oracle;
  }
  CHECK(correct >= 495);
  CHECK(f.split_counts()[1] == 20);
  CHECK(f.split_counts()[0] == 0);
  CHECK(f.impurity_decrease()(0) == 0.0);
}

TEST_CASE("forest is invariant to a monotone transform of a column") {
  const Matrix X = testutil::gaussian(1500, 3, 6);
  Vector y(1500);
  for (Index i = 0; i < 1500; ++i) y(i) = std::tanh(X(i, 0)) + 0.3 * X(i, 2);
  Matrix Xt = X;
  for (Index i = 0; i < 1500; ++i) Xt(i, 0) = std::exp(X(i, 0)) + X(i, 0) * X(i, 0) * X(i, 0);
  ForestConfig cfg;
  cfg.n_trees = 25;
  cfg.max_depth = 6;
  const auto a = train_forest(X.topRows(1000), regression(y.head(1000)), cfg, 17);
  const auto b = train_forest(Xt.topRows(1000), regression(y.head(1000)), cfg, 17);
  CHECK(a.split_counts() == b.split_counts());
  CHECK((a.impurity_decrease() - b.impurity_decrease()).cwiseAbs().maxCoeff() < 1e-12);
  // held-out rows included
  CHECK((a.predict(X) - b.predict(Xt)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("model serialization round trip") {
  const Matrix X = testutil::gaussian(300, 2, 9);
  const Vector y = X.col(0) - X.col(1);
  ForestConfig fc;
  fc.n_trees = 5;
  fc.max_depth = 3;
  AdamConfig ac;
  ac.epochs = 3;
  RffConfig rc;
  std::vector<std::shared_ptr<const ProbeModel>> models{
      std::make_shared<LinearModel>(fit_least_squares(X, y)),
      std::make_shared<MlpModel>(train_mlp(X, regression(y), Matrix(0, 2), regression(Vector()), {4, 4}, ac, 1)),
      std::make_shared<ForestModel>(train_forest(X, regression(y), fc, 2)),
      std::make_shared<RffModel>(train_rff(X, regression(y), X, regression(y), 16, rc, 3))};
  for (const auto& m : models) {
    const auto back = model_from_json(nlohmann::json::from_cbor(nlohmann::json::to_cbor(m->to_json())));
    CHECK(back->kind() == m->kind());
    CHECK(back->predict(X) == m->predict(X));
  }
}

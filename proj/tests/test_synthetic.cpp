#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dcies/probes.hpp"
#include "dcies/synthetic.hpp"
#include "helpers.hpp"

using namespace dcies;

namespace {

std::vector<FactorSpec> mpi3d_like() {
  return {FactorSpec::categorical("object_color", 6), FactorSpec::categorical("object_shape", 6),
          FactorSpec::categorical("object_size", 2),  FactorSpec::categorical("camera_height", 3),
          FactorSpec::categorical("background_color", 3), FactorSpec::categorical("horizontal_axis", 40),
          FactorSpec::categorical("vertical_axis", 40)};
}

double pearson(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

Vector ranks(const Vector& v) {
  std::vector<Index> order(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) < v(b); });
  Vector r(v.size());
  for (Index k = 0; k < v.size(); ++k) r(order[static_cast<std::size_t>(k)]) = static_cast<double>(k);
  return r;
}

}  // namespace

TEST_CASE("factor generation") {
  SUBCASE("binary factor is balanced") {
    const Matrix Z = generate_factors({FactorSpec::categorical("b", 2)}, 10000, 5);
    CHECK(std::abs(Z.col(0).mean() - 0.5) <= 0.02);
  }
  SUBCASE("seven-factor spec") {
    const Matrix Z = generate_factors(mpi3d_like(), 2000, 1);
    CHECK(Z.rows() == 2000);
    CHECK(Z.cols() == 7);
    CHECK(Z.col(5).maxCoeff() <= 39);
    CHECK(Z.col(5).minCoeff() >= 0);
    CHECK(Z == Z.array().round().matrix());
  }
  SUBCASE("determinism") {
    const auto specs = testutil::continuous_specs(3);
    CHECK(generate_factors(specs, 500, 9) == generate_factors(specs, 500, 9));
    CHECK(generate_factors(specs, 500, 9) != generate_factors(specs, 500, 10));
  }
  SUBCASE("continuous factors are standardized grid values") {
    const Matrix Z = generate_factors(testutil::continuous_specs(1), 20000, 2, 100);
    CHECK(std::abs(Z.col(0).mean()) < 1e-9);
    CHECK(std::abs((Z.col(0).array() - Z.col(0).mean()).square().mean() - 1.0) < 1e-9);
    std::vector<double> v(Z.data(), Z.data() + Z.rows());
    std::sort(v.begin(), v.end());
    CHECK(std::unique(v.begin(), v.end()) - v.begin() == 100);
  }
}

TEST_CASE("identity mixing copies the factors") {
  const Matrix Z = mixing_input(generate_factors(mpi3d_like(), 1000, 3));
  const auto m = mix(Z, {});
  CHECK(m.codes == Z);
}

TEST_CASE("uniform linear mixing matrix") {
  const Matrix Z = mixing_input(generate_factors(testutil::continuous_specs(7), 500, 4));
  MixingSpec spec;
  spec.kind = MixingKind::linear_uniform;
  spec.seed = 17;
  const auto m = mix(Z, spec);
  REQUIRE(m.weights.rows() == 7);
  REQUIRE(m.weights.cols() == 7);
  int close = 0;
  for (Index i = 0; i < 49; ++i) close += std::abs(m.weights(i) - 1.0 / 49.0) <= 3.0 * std::sqrt(0.001);
  CHECK(close >= 0.99 * 49);
  CHECK((m.codes - Z * m.weights.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::JacobiSVD<Matrix> svd(m.weights);
  CHECK(svd.singularValues()(0) / svd.singularValues()(6) < 1e8);
}

TEST_CASE("monotone mixing preserves order") {
  const Matrix Z = mixing_input(generate_factors(testutil::continuous_specs(3), 2000, 6));
  MixingSpec spec;
  spec.kind = MixingKind::elementwise_monotone;
  spec.maps = std::vector<MonotoneMap>(3, MonotoneMap{MonotoneMap::Family::cubic, 1.0});
  spec.permutation = {0, 1, 2};
  const auto m = mix(Z, spec);
  for (Index j = 0; j < 3; ++j) {
    CHECK(m.codes(7, j) == doctest::Approx(std::pow(Z(7, j), 3) + Z(7, j)));
    CHECK(pearson(ranks(m.codes.col(j)), ranks(Z.col(j))) == doctest::Approx(1.0));
  }
  spec.permutation = {2, 0, 1};
  const auto p = mix(Z, spec);
  CHECK(p.codes.col(0) == m.codes.col(2));
  spec.permutation = {0, 0, 1};
  CHECK_THROWS_AS(mix(Z, spec), ConfigError);
}

TEST_CASE("signed permutation mixing") {
  const Matrix Z = mixing_input(generate_factors(testutil::continuous_specs(4), 300, 7));
  MixingSpec spec;
  spec.kind = MixingKind::signed_permutation;
  spec.seed = 3;
  const auto m = mix(Z, spec);
  for (Index j = 0; j < 4; ++j)
    CHECK(m.codes.col(j) == m.signs[static_cast<std::size_t>(j)] * Z.col(m.permutation[static_cast<std::size_t>(j)]));
}

TEST_CASE("noisy mixing") {
  const double sigma = 0.1;
  const Matrix Z = mixing_input(generate_factors(testutil::continuous_specs(2), 10000, 8));
  MixingSpec spec;
  spec.kind = MixingKind::noisy;
  spec.noise_std = sigma;
  spec.seed = 1;
  const auto m = mix(Z, spec);
  for (Index j = 0; j < 2; ++j)
    CHECK(std::abs(pearson(m.codes.col(j), Z.col(j)) - 1.0 / std::sqrt(1.0 + sigma * sigma)) <= 0.02);
  MixingSpec bad;
  bad.noise_std = 0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("random mlp mixing") {
  const Matrix Z = mixing_input(generate_factors(testutil::continuous_specs(3), 400, 9));
  MixingSpec spec;
  spec.kind = MixingKind::random_mlp;
  spec.seed = 4;
  spec.code_dim = 5;
  const auto a = mix(Z, spec);
  CHECK(a.codes.cols() == 5);
  CHECK(a.codes.cwiseAbs().maxCoeff() < 1.0);
  CHECK(mix(Z, spec).codes == a.codes);
}

TEST_CASE("split assignment") {
  const auto s = assign_splits(1000, 0.7, 0.1, 3);
  CHECK(std::count(s.begin(), s.end(), Split::train) == 700);
  CHECK(std::count(s.begin(), s.end(), Split::validation) == 100);
  CHECK(std::count(s.begin(), s.end(), Split::test) == 200);
  CHECK(assign_splits(1000, 0.7, 0.1, 3) == s);
  CHECK_THROWS_AS(assign_splits(10, 0.9, 0.2, 1), ConfigError);
}

TEST_CASE("downstream tasks") {
  SyntheticConfig cfg;
  cfg.factor_specs = testutil::continuous_specs(7);
  cfg.n_samples = 5000;
  const auto data = normalize_dataset(make_synthetic_dataset(cfg, {}, 1));
  const auto tasks = make_downstream_tasks(data, -1, -1, 11);
  REQUIRE(tasks.size() == 14);
  const auto& train = data.rows(Split::train);
  int reg = 0;
  for (const auto& t : tasks) {
    if (t.kind == DownstreamKind::regression) {
      ++reg;
      CHECK(t.weights.minCoeff() >= 0.0);
      CHECK(t.weights.maxCoeff() <= 1.0);
      CHECK((t.labels - data.factors() * t.weights).cwiseAbs().maxCoeff() < 1e-6);
    } else {
      double ones = 0.0;
      for (Index r : train) ones += t.labels(r);
      CHECK(std::abs(ones / static_cast<double>(train.size()) - 0.5) <= 0.02);
      Vector v(static_cast<Index>(train.size()));
      for (std::size_t k = 0; k < train.size(); ++k) v(static_cast<Index>(k)) = data.factors()(train[k], t.factor);
      CHECK(std::abs(t.threshold - balanced_threshold(v)) <= 1e-9);  // factors are restandardized
    }
  }
  CHECK(reg == 7);
  CHECK(make_downstream_tasks(data, 2, 0, 11).size() == 2);
}

TEST_CASE("balanced threshold") {
  Vector v(6);
  v << 3, 1, 2, 6, 5, 4;
  CHECK(balanced_threshold(v) == 3.5);
  Vector ties(5);
  ties << 0, 0, 0, 1, 1;
  CHECK(balanced_threshold(ties) == 0.5);
}

TEST_CASE("oracle scores") {
  MixingSpec gt;
  auto s = oracle_scores(gt);
  CHECK(*s.D == 1.0);
  CHECK(*s.E == 1.0);
  MixingSpec lin;
  lin.kind = MixingKind::linear_uniform;
  s = oracle_scores(lin);
  CHECK(*s.D == 0.0);
  CHECK(*s.C == 0.0);
  CHECK(*s.I == 1.0);
  CHECK(*s.E == 1.0);
  MixingSpec sp;
  sp.kind = MixingKind::signed_permutation;
  s = oracle_scores(sp);
  CHECK((*s.D == 1.0 && *s.C == 1.0 && *s.I == 1.0 && *s.E == 1.0));
  MixingSpec noisy;
  noisy.kind = MixingKind::noisy;
  noisy.noise_std = 0.1;
  CHECK(*oracle_scores(noisy).I == doctest::Approx(1.0 - 0.01 / 1.01));
  MixingSpec raw;
  raw.kind = MixingKind::random_mlp;
  CHECK_THROWS_AS(oracle_scores(raw), NotAnalytic);
}

TEST_CASE("monotone mixing leaves forest losses unchanged") {
  SyntheticConfig cfg;
  cfg.factor_specs = {FactorSpec::categorical("a", 4), FactorSpec::categorical("b", 3)};
  cfg.n_samples = 3000;
  MixingSpec mono;
  mono.kind = MixingKind::elementwise_monotone;
  mono.permutation = {0, 1};
  mono.seed = 2;
  const auto plain = normalize_dataset(make_synthetic_dataset(cfg, {}, 4));
  const auto warped = normalize_dataset(make_synthetic_dataset(cfg, mono, 4));
  CHECK(plain.factors() == warped.factors());
  LadderConfig lc;
  lc.rf_depths = {1, 2, 4, 8};
  TrainingConfig tc;
  tc.rf.n_trees = 15;
  const auto ladder = build_ladder(ProbeClass::rf, {2, 2}, lc);
  const auto a = train_ladder(plain, ladder, {0, 1}, tc, 6);
  const auto b = train_ladder(warped, ladder, {0, 1}, tc, 6);
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t t = 0; t < ladder.size(); ++t)
      CHECK(a.factors[f].losses[t].raw == doctest::Approx(b.factors[f].losses[t].raw).epsilon(1e-12));
}

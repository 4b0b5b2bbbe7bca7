#include <doctest.h>

#include <random>

#include "dcies/core.hpp"
#include "helpers.hpp"

using namespace dcies;
using testutil::block_split;

namespace {

CodedDataset one_column(std::vector<double> v) {
  Matrix codes(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) codes(static_cast<Index>(i), 0) = v[i];
  Matrix factors = codes;
  return CodedDataset(codes, factors, {FactorSpec::continuous("z")},
                      std::vector<Split>(v.size(), Split::train));
}

}  // namespace

TEST_CASE("factor spec invariants") {
  CHECK_NOTHROW(FactorSpec::categorical("shape", 6).validate());
  CHECK_THROWS_AS(FactorSpec::categorical("flag", 1).validate(), DatasetError);
  FactorSpec bad = FactorSpec::continuous("x");
  bad.cardinality = 3;
  CHECK_THROWS_AS(bad.validate(), DatasetError);
}

TEST_CASE("split labels round trip") {
  for (auto s : {Split::train, Split::validation, Split::test}) CHECK(parse_split(to_string(s)) == s);
  CHECK_THROWS_AS(parse_split("holdout"), DatasetError);
}

TEST_CASE("dataset rejects broken inputs") {
  Matrix codes = Matrix::Ones(3, 2);
  Matrix factors(3, 1);
  factors << 0, 1, 2;
  auto split = std::vector<Split>(3, Split::train);
  CHECK_THROWS_AS(CodedDataset(codes, factors, {FactorSpec::categorical("c", 2)}, split), DatasetError);
  CHECK_NOTHROW(CodedDataset(codes, factors, {FactorSpec::categorical("c", 3)}, split));
  codes(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(CodedDataset(codes, factors, {FactorSpec::categorical("c", 3)}, split), DatasetError);
  CHECK_THROWS_AS(CodedDataset(Matrix::Ones(3, 2), factors, {FactorSpec::categorical("c", 3)},
                               std::vector<Split>(2, Split::train)),
                  DatasetError);
}

TEST_CASE("standardization of [2,4,6]") {
  const auto n = normalize_dataset(one_column({2, 4, 6}));
  CHECK(n.codes()(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(n.codes()(1, 0) == doctest::Approx(0.0));
  CHECK(n.codes()(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  REQUIRE(n.normalization());
  CHECK(n.normalization()->codes[0].mean == doctest::Approx(4.0));
}

TEST_CASE("standardization is idempotent") {
  const Matrix codes = testutil::gaussian(200, 3, 1) * 3.0;
  const Matrix factors = testutil::gaussian(200, 2, 2);
  const auto once = testutil::dataset(codes, factors);
  const auto twice = normalize_dataset(once);
  CHECK((once.codes() - twice.codes()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((once.factors() - twice.factors()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("standardization uses train statistics only") {
  const Matrix codes = testutil::gaussian(500, 2, 3);
  const Matrix factors = testutil::gaussian(500, 1, 4);
  auto split = block_split(500, 300, 50);
  Matrix shifted = codes;
  for (Index i = 350; i < 500; ++i) shifted(i, 0) += 100.0;  // only test rows move
  const auto a = normalize_dataset(CodedDataset(codes, factors, testutil::continuous_specs(1), split));
  const auto b = normalize_dataset(CodedDataset(shifted, factors, testutil::continuous_specs(1), split));
  CHECK(a.normalization()->codes[0].mean == b.normalization()->codes[0].mean);
  const Matrix train = a.codes_for(Split::train);
  for (Index c = 0; c < 2; ++c) {
    CHECK(std::abs(train.col(c).mean()) < 1e-6);
    const double var = (train.col(c).array() - train.col(c).mean()).square().mean();
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("categorical factors are left alone") {
  Matrix codes = testutil::gaussian(6, 1, 5);
  Matrix factors(6, 1);
  factors << 0, 1, 2, 0, 1, 2;
  const auto n = normalize_dataset(
      CodedDataset(codes, factors, {FactorSpec::categorical("c", 3)}, std::vector<Split>(6, Split::train)));
  CHECK(n.factors() == factors);
  CHECK_FALSE(n.normalization()->factors[0].has_value());
}

TEST_CASE("constant code column is reported") {
  try {
    normalize_dataset(one_column({5, 5, 5}));
    FAIL("expected ZeroVarianceColumn");
  } catch (const ZeroVarianceColumn& e) {
    CHECK(e.index() == 0);
  }
}

TEST_CASE("row distributions") {
  SUBCASE("identity") {
    const auto r = row_distributions(validate_importance(Matrix::Identity(2, 2)));
    CHECK(r.values == Matrix::Identity(2, 2));
    CHECK(r.row_weights[0] == doctest::Approx(0.5));
    CHECK(r.row_weights[1] == doctest::Approx(0.5));
  }
  SUBCASE("already row-stochastic") {
    Matrix R(2, 2);
    R << 0.8, 0.2, 0.2, 0.8;
    const auto r = row_distributions(validate_importance(R));
    CHECK((r.values - R).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.row_weights[0] == doctest::Approx(0.5));
  }
  SUBCASE("dead second code") {
    Matrix R(2, 2);
    R << 1, 1, 0, 0;
    const auto r = row_distributions(validate_importance(R));
    CHECK(r.row_weights[0] == doctest::Approx(1.0));
    CHECK(r.row_weights[1] == 0.0);
    CHECK(r.dead[1]);
    CHECK_FALSE(r.dead[0]);
    CHECK(r.values.allFinite());
  }
}

TEST_CASE("row weights sum to one for random importance matrices") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const Index L = dim(rng), K = dim(rng);
    Matrix m(L, K);
    for (Index i = 0; i < L; ++i)
      for (Index k = 0; k < K; ++k) m(i, k) = u(rng) < 0.3 ? 0.0 : u(rng);
    for (Index k = 0; k < K; ++k) {
      if (m.col(k).sum() == 0.0) m(0, k) = 1.0;
      m.col(k) /= m.col(k).sum();
    }
    const auto r = row_distributions(validate_importance(m));
    double total = 0.0;
    for (double w : r.row_weights) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.values.allFinite());
  }
}

TEST_CASE("importance validation") {
  SUBCASE("permutation accepted unchanged") {
    Matrix P(3, 3);
    P << 0, 1, 0, 0, 0, 1, 1, 0, 0;
    CHECK(validate_importance(P).values == P);
  }
  SUBCASE("small excess is renormalized") {
    Matrix m(2, 1);
    m << 0.5, 0.5 + 1e-8;
    const auto R = validate_importance(m);
    CHECK(R.values.col(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("tiny negatives are clamped") {
    Matrix m(2, 1);
    m << -1e-10, 1.0;
    CHECK(validate_importance(m).values(0, 0) == 0.0);
  }
  SUBCASE("negative entry") {
    Matrix m(2, 1);
    m << -0.1, 1.1;
    CHECK_THROWS_AS(validate_importance(m), NegativeImportance);
  }
  SUBCASE("column sum off") {
    Matrix m(2, 1);
    m << 0.5, 0.6;
    try {
      validate_importance(m);
      FAIL("expected InvalidImportance");
    } catch (const InvalidImportance& e) {
      CHECK(e.column() == 0);
      CHECK(e.sum() == doctest::Approx(1.1));
    }
  }
}

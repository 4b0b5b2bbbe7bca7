#pragma once

#include <random>
#include <vector>

#include "dcies/core.hpp"
#include "dcies/synthetic.hpp"

namespace testutil {

using namespace dcies;

// First `n_train` rows train, next `n_val` validation, rest test.
inline std::vector<Split> block_split(Index n, Index n_train, Index n_val) {
  std::vector<Split> s(static_cast<std::size_t>(n), Split::test);
  for (Index i = 0; i < n; ++i)
    s[static_cast<std::size_t>(i)] = i < n_train ? Split::train : (i < n_train + n_val ? Split::validation : Split::test);
  return s;
}

inline Matrix gaussian(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = g(rng);
  return m;
}

inline std::vector<FactorSpec> continuous_specs(Index k) {
  std::vector<FactorSpec> s;
  for (Index j = 0; j < k; ++j) s.push_back(FactorSpec::continuous("z" + std::to_string(j)));
  return s;
}

// Normalized dataset with the given codes and continuous factors, split 70/10/20.
inline CodedDataset dataset(const Matrix& codes, const Matrix& factors) {
  const Index n = codes.rows();
  const Index tr = n * 7 / 10, va = n / 10;
  return normalize_dataset(CodedDataset(codes, factors, continuous_specs(factors.cols()), block_split(n, tr, va)));
}

}  // namespace testutil

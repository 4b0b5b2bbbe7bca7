#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's metric or importance code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dcies/core.hpp"

namespace oracle {

using dcies::Index;
using dcies::Matrix;
using dcies::Vector;

// Entropy in base b, straight from the definition.
inline double entropy(const std::vector<double>& p, double b) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x) / std::log(b);
  return h;
}

inline double disentanglement(const Matrix& R) {
  const Index L = R.rows(), K = R.cols();
  double total = R.sum(), d = 0.0;
  for (Index i = 0; i < L; ++i) {
    const double mass = R.row(i).sum();
    if (mass <= 0) continue;
    std::vector<double> p;
    for (Index k = 0; k < K; ++k) p.push_back(R(i, k) / mass);
    d += mass / total * (1.0 - entropy(p, static_cast<double>(K)));
  }
  return d;
}

inline double completeness(const Matrix& R) {
  const Index L = R.rows(), K = R.cols();
  double c = 0.0;
  for (Index k = 0; k < K; ++k) {
    std::vector<double> p;
    for (Index i = 0; i < L; ++i) p.push_back(R(i, k));
    c += 1.0 - entropy(p, static_cast<double>(L));
  }
  return c / static_cast<double>(K);
}

// Trapezoid sum up to the arg-min, the long way round.
inline double aulcc(const std::vector<double>& kappa, const std::vector<double>& loss) {
  std::size_t best = 0;
  for (std::size_t t = 1; t < loss.size(); ++t)
    if (loss[t] < loss[best]) best = t;
  double a = 0.0;
  for (std::size_t t = 1; t <= best; ++t)
    a += (kappa[t] - kappa[t - 1]) * ((loss[t - 1] + loss[t]) / 2.0 - loss[best]);
  return a;
}

// Exact value of a coalition for a linear regressor under marginal
// imputation with `draws` background rows averaged per prediction:
// E[(w_S x_S + mean_k w_Sbar x'_Sbar,k + b - y)^2]. Draws are uniform with
// replacement over the background rows, so the averaged prediction has mean
// w_Sbar mu and variance w_Sbar' Sigma w_Sbar / draws.
inline double linear_coalition_loss(const Vector& w, double b, const Matrix& eval, const Vector& y,
                                    const Matrix& background, unsigned mask, int draws) {
  const Index L = w.size();
  const Vector mu = background.colwise().mean();
  const Matrix centered = background.rowwise() - mu.transpose();
  const Matrix sigma = centered.transpose() * centered / static_cast<double>(background.rows());
  Vector w_out = Vector::Zero(L);
  for (Index i = 0; i < L; ++i)
    if (!(mask >> i & 1U)) w_out(i) = w(i);
  const double spread = w_out.dot(sigma * w_out) / draws;
  double total = 0.0;
  for (Index r = 0; r < eval.rows(); ++r) {
    double pred = b;
    for (Index i = 0; i < L; ++i) pred += w(i) * ((mask >> i & 1U) ? eval(r, i) : mu(i));
    total += (pred - y(r)) * (pred - y(r));
  }
  return total / static_cast<double>(eval.rows()) + spread;
}

// Shapley values of loss reduction by enumerating all 2^L coalitions.
template <class ValueFn>
Vector exhaustive_shapley(Index L, ValueFn loss_of_mask) {
  const unsigned full = 1U << L;
  std::vector<double> v(full);
  for (unsigned m = 0; m < full; ++m) v[m] = loss_of_mask(m);
  std::vector<double> fact(static_cast<std::size_t>(L) + 1, 1.0);
  for (std::size_t k = 1; k < fact.size(); ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  Vector phi = Vector::Zero(L);
  for (Index i = 0; i < L; ++i) {
    for (unsigned m = 0; m < full; ++m) {
      if (m >> i & 1U) continue;
      const int s = __builtin_popcount(m);
      const double weight = fact[static_cast<std::size_t>(s)] * fact[static_cast<std::size_t>(L - s - 1)] /
                            fact[static_cast<std::size_t>(L)];
      phi(i) += weight * (v[m] - v[m | (1U << i)]);
    }
  }
  return phi;
}

inline Vector clamp_normalize(Vector phi) {
  phi = phi.cwiseMax(0.0);
  const double s = phi.sum();
  if (s > 0) phi /= s;
  return phi;
}

inline Matrix random_permutation_matrix(Index n, std::mt19937_64& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  Matrix P = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) P(p[static_cast<std::size_t>(j)], j) = 1.0;
  return P;
}

}  // namespace oracle

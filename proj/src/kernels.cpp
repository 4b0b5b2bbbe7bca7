#include "dcies/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace dcies::kernels {

int configure_threads_from_env() {
  if (const char* env = std::getenv("DCIES_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) omp_set_num_threads(n);
    } catch (const std::exception&) {
      // ignore malformed values
    }
  }
  return omp_get_max_threads();
}

namespace {

ColumnStats stats_of(const Matrix& X, Index c) {
  const Index n = X.rows();
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) sum += X(i, c);
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = X(i, c) - mean;
    sq += d * d;
  }
  return ColumnStats{mean, std::sqrt(sq / static_cast<double>(n))};
}

}  // namespace

std::vector<ColumnStats> column_stats_serial(const Matrix& X) {
  std::vector<ColumnStats> out(static_cast<std::size_t>(X.cols()));
  for (Index c = 0; c < X.cols(); ++c) out[static_cast<std::size_t>(c)] = stats_of(X, c);
  return out;
}

std::vector<ColumnStats> column_stats_parallel(const Matrix& X) {
  std::vector<ColumnStats> out(static_cast<std::size_t>(X.cols()));
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < X.cols(); ++c) out[static_cast<std::size_t>(c)] = stats_of(X, c);
  return out;
}

Matrix rff_features_serial(const Matrix& X, const Matrix& omega, const Vector& offset, double scale) {
  Matrix proj = X * omega;
  for (Index d = 0; d < proj.cols(); ++d)
    for (Index i = 0; i < proj.rows(); ++i) proj(i, d) = scale * std::cos(proj(i, d) + offset(d));
  return proj;
}

Matrix rff_features_parallel(const Matrix& X, const Matrix& omega, const Vector& offset, double scale) {
  Matrix proj = X * omega;
#pragma omp parallel for schedule(static)
  for (Index d = 0; d < proj.cols(); ++d)
    for (Index i = 0; i < proj.rows(); ++i) proj(i, d) = scale * std::cos(proj(i, d) + offset(d));
  return proj;
}

namespace {

double median_of(std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline std::size_t pair_offset(Index i, Index n) {
  // Index of pair (i, i+1) in row-major upper-triangular order.
  const auto ui = static_cast<std::size_t>(i);
  const auto un = static_cast<std::size_t>(n);
  return ui * un - ui * (ui + 1) / 2;
}

}  // namespace

double median_pairwise_distance_serial(const Matrix& X) {
  const Index n = X.rows();
  std::vector<double> d(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (Index i = 0; i < n; ++i) {
    std::size_t k = pair_offset(i, n);
    for (Index j = i + 1; j < n; ++j) d[k++] = (X.row(i) - X.row(j)).norm();
  }
  return median_of(d);
}

double median_pairwise_distance_parallel(const Matrix& X) {
  const Index n = X.rows();
  std::vector<double> d(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < n; ++i) {
    std::size_t k = pair_offset(i, n);
    for (Index j = i + 1; j < n; ++j) d[k++] = (X.row(i) - X.row(j)).norm();
  }
  return median_of(d);
}

namespace {

inline const double* leaf_for(const FlatTree& t, const Matrix& X, Index row) {
  int node = 0;
  while (t.feature[static_cast<std::size_t>(node)] >= 0) {
    const auto n = static_cast<std::size_t>(node);
    node = X(row, t.feature[n]) <= t.threshold[n] ? t.left[n] : t.right[n];
  }
  return t.values.data() + t.value_offset[static_cast<std::size_t>(node)];
}

void predict_row(std::span<const FlatTree> trees, const Matrix& X, Index row, Matrix& out) {
  const int width = trees.front().value_width;
  for (const auto& t : trees) {
    const double* v = leaf_for(t, X, row);
    for (int c = 0; c < width; ++c) out(row, c) += v[c];
  }
  out.row(row) /= static_cast<double>(trees.size());
}

}  // namespace

Matrix forest_predict_serial(std::span<const FlatTree> trees, const Matrix& X) {
  if (trees.empty()) return Matrix::Zero(X.rows(), 1);
  Matrix out = Matrix::Zero(X.rows(), trees.front().value_width);
  for (Index i = 0; i < X.rows(); ++i) predict_row(trees, X, i, out);
  return out;
}

Matrix forest_predict_parallel(std::span<const FlatTree> trees, const Matrix& X) {
  if (trees.empty()) return Matrix::Zero(X.rows(), 1);
  Matrix out = Matrix::Zero(X.rows(), trees.front().value_width);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < X.rows(); ++i) predict_row(trees, X, i, out);
  return out;
}

namespace {

void fill_permutation(const MaskedBatchPlan& plan, std::size_t p, Matrix& out) {
  const Matrix& eval = *plan.eval;
  const Matrix& bg = *plan.background;
  const Index L = eval.cols();
  const Index draws = plan.draws;
  const auto& order = plan.orders[p];
  const Index sample = plan.samples[p];
  for (Index k = 0; k < draws; ++k) {
    const Index b = plan.background_rows[p * static_cast<std::size_t>(draws) + static_cast<std::size_t>(k)];
    for (Index s = 0; s <= L; ++s) {
      const Index row = (static_cast<Index>(p) * (L + 1) + s) * draws + k;
      out.row(row) = bg.row(b);
      for (Index t = 0; t < s; ++t) {
        const int f = order[static_cast<std::size_t>(t)];
        out(row, f) = eval(sample, f);
      }
    }
  }
}

Matrix allocate_batch(const MaskedBatchPlan& plan) {
  const Index L = plan.eval->cols();
  return Matrix(static_cast<Index>(plan.samples.size()) * (L + 1) * plan.draws, L);
}

}  // namespace

Matrix masked_batch_serial(const MaskedBatchPlan& plan) {
  Matrix out = allocate_batch(plan);
  for (std::size_t p = 0; p < plan.samples.size(); ++p) fill_permutation(plan, p, out);
  return out;
}

Matrix masked_batch_parallel(const MaskedBatchPlan& plan) {
  Matrix out = allocate_batch(plan);
  const auto n = static_cast<std::ptrdiff_t>(plan.samples.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < n; ++p) fill_permutation(plan, static_cast<std::size_t>(p), out);
  return out;
}

}  // namespace dcies::kernels

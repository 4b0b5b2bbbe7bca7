#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference
// (`*_serial`) kept for testing and an OpenMP version (`*_parallel`); the
// unsuffixed name is what the library calls. Parallel versions write to
// disjoint output slots only, so both produce bit-identical results.

#include <cstdint>
#include <span>
#include <vector>

#include "dcies/core.hpp"

namespace dcies::kernels {

/// Caps OpenMP workers from DCIES_THREADS if set. Returns the active cap.
int configure_threads_from_env();

// Population mean / standard deviation per column.
std::vector<ColumnStats> column_stats_serial(const Matrix& X);
std::vector<ColumnStats> column_stats_parallel(const Matrix& X);
inline std::vector<ColumnStats> column_stats(const Matrix& X) { return column_stats_parallel(X); }

// Random Fourier features: scale * cos(X * omega + offset), X is N x L,
// omega is L x D, offset has D entries.
Matrix rff_features_serial(const Matrix& X, const Matrix& omega, const Vector& offset, double scale);
Matrix rff_features_parallel(const Matrix& X, const Matrix& omega, const Vector& offset, double scale);
inline Matrix rff_features(const Matrix& X, const Matrix& omega, const Vector& offset, double scale) {
  return rff_features_parallel(X, omega, offset, scale);
}

// Median of the Euclidean distances over all unordered row pairs of X.
double median_pairwise_distance_serial(const Matrix& X);
double median_pairwise_distance_parallel(const Matrix& X);
inline double median_pairwise_distance(const Matrix& X) { return median_pairwise_distance_parallel(X); }

/// A decision tree in flat arrays. Leaves have feature == -1; each node owns
/// `value_width` entries of `values` starting at `value_offset`.
struct FlatTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<int> value_offset;
  std::vector<double> values;
  int value_width = 1;

  std::size_t size() const { return feature.size(); }
};

// Mean of the leaf values reached by each row over all trees; N x value_width.
Matrix forest_predict_serial(std::span<const FlatTree> trees, const Matrix& X);
Matrix forest_predict_parallel(std::span<const FlatTree> trees, const Matrix& X);
inline Matrix forest_predict(std::span<const FlatTree> trees, const Matrix& X) {
  return forest_predict_parallel(trees, X);
}

/// Inputs for marginal-imputation batches. For permutation p with sample row
/// samples[p] and ordering orders[p], step s (0..L) keeps the first s features
/// of the ordering from the sample and takes the rest from background rows
/// background[p * draws + k], k < draws. Output rows are laid out as
/// ((p * (L + 1) + s) * draws + k).
struct MaskedBatchPlan {
  const Matrix* eval = nullptr;        // source of samples
  const Matrix* background = nullptr;  // source of imputation rows
  std::vector<Index> samples;
  std::vector<std::vector<int>> orders;
  std::vector<Index> background_rows;
  int draws = 1;
};

Matrix masked_batch_serial(const MaskedBatchPlan& plan);
Matrix masked_batch_parallel(const MaskedBatchPlan& plan);
inline Matrix masked_batch(const MaskedBatchPlan& plan) { return masked_batch_parallel(plan); }

}  // namespace dcies::kernels

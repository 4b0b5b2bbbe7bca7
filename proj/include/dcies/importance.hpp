#pragma once

// Relative-importance matrices from fitted probes: coefficient magnitudes for
// linear heads, impurity decrease for forests, and Shapley-value sampling of
// predictive-performance contributions (SAGE-style) for anything else.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcies/core.hpp"
#include "dcies/probes.hpp"

namespace dcies {

struct SageConfig {
  int n_permutations = 1024;
  int marginal_sample_size = 32;
  double convergence_tol = 1e-3;
  long long max_evals = 50'000'000;
  int window = 64;  // permutations between convergence checks
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-factor outcome of an importance computation.
struct ImportanceDiagnostics {
  std::string method;  // "coefficient", "gini", "sage"
  bool zero_mass = false;
  bool degenerate_forest = false;
  bool not_converged = false;
  bool clamp_warning = false;  // clamping removed more than 5% of the mass
  double clamped_fraction = 0.0;
  int permutations = 0;
  long long evals = 0;
  double empty_loss = 0.0;  // loss with every feature imputed
  double full_loss = 0.0;   // loss with no feature imputed
};

struct SageResult {
  Vector raw;     // mean marginal loss reduction per feature
  Vector column;  // clamped and normalized
  ImportanceDiagnostics diagnostics;
};

/// Column-normalized |W|. Throws ZeroColumn when a column of W is all zero.
ImportanceMatrix coefficient_importance(const Matrix& weights, std::string probe_tag = "coefficient");

struct GiniResult {
  ImportanceMatrix matrix;
  std::vector<ImportanceDiagnostics> diagnostics;
};

/// One forest probe per factor, in factor order.
GiniResult gini_importance(const std::vector<FittedProbe>& forests);

/// Permutation-sampling Shapley estimate of each code's contribution to
/// reducing the test loss of `probe`, with masked codes imputed from rows of
/// the train split.
SageResult sage_importance(const FittedProbe& probe, const CodedDataset& data, Index factor, const SageConfig& cfg);

struct ImportanceConfig {
  SageConfig sage;
  bool coefficients_for_linear = false;
};

struct ImportanceResult {
  ImportanceMatrix matrix;
  std::vector<ImportanceDiagnostics> diagnostics;
};

/// rf -> Gini importance; mlp/rff -> SAGE per factor (linear mlp heads use
/// coefficient magnitudes when the flag is set).
ImportanceResult importance_for(ProbeClass probe_class, const std::vector<FittedProbe>& probes,
                                const CodedDataset& data, const ImportanceConfig& cfg);

}  // namespace dcies

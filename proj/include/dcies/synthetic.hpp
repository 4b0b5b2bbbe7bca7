#pragma once

// Ground-truth factor generators, synthetic representations (mixings of the
// factors) and downstream tasks built on the factors.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcies/core.hpp"

namespace dcies {

enum class MixingKind {
  identity,
  noisy,
  linear_uniform,
  signed_permutation,
  elementwise_monotone,
  random_linear,
  random_mlp
};

const char* to_string(MixingKind k);
MixingKind parse_mixing_kind(const std::string& s);

/// Strictly increasing scalar map.
struct MonotoneMap {
  enum class Family { cubic, sinh, exp } family = Family::cubic;
  double a = 1.0;  // cubic: x + a x^3; sinh: sinh(a x) / a; exp: exp(a x) / a

  double operator()(double x) const;
};

struct MixingSpec {
  MixingKind kind = MixingKind::identity;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  int code_dim = 0;  // 0 means L = K (only random_linear / random_mlp may differ)
  int depth = 2;     // random_mlp layers
  double gain = 2.0; // random_mlp weight scale
  std::vector<MonotoneMap> maps;  // elementwise_monotone; sampled when empty
  std::vector<int> permutation;   // code j reads factor permutation[j]; sampled when empty

  void validate() const;
};

/// Codes plus the generator parameters that produced them.
struct MixedCodes {
  Matrix codes;
  Matrix weights;                // linear mixings: codes = factors * weights^T
  std::vector<int> permutation;  // code j reads factor permutation[j]
  std::vector<int> signs;
  std::vector<MonotoneMap> maps;
};

/// Factor matrix: categorical factors as class indices drawn uniformly;
/// continuous factors uniform on `grid_size` points, then standardized.
Matrix generate_factors(const std::vector<FactorSpec>& specs, Index n_samples, std::uint64_t seed,
                        int grid_size = 100);

/// Standardizes every factor column (categorical class indices included) so
/// factors can be mixed.
Matrix mixing_input(const Matrix& factors);

/// Throws SingularMixing if a sampled linear map stays above condition 1e8
/// after one resample.
MixedCodes mix(const Matrix& standardized_factors, const MixingSpec& spec);

/// Seeded split assignment with the given train/validation/test fractions.
std::vector<Split> assign_splits(Index n, double train, double validation, std::uint64_t seed);

struct SyntheticConfig {
  std::vector<FactorSpec> factor_specs;
  Index n_samples = 20000;
  int grid_size = 100;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
};

/// Raw (un-normalized) dataset for a mixing: factors as generated, codes mixed.
CodedDataset make_synthetic_dataset(const SyntheticConfig& cfg, const MixingSpec& mixing, std::uint64_t seed,
                                    MixedCodes* generator = nullptr);

enum class DownstreamKind { regression, classification };

struct DownstreamTask {
  int id = 0;
  DownstreamKind kind = DownstreamKind::regression;
  Vector weights;     // regression: y = factors * weights
  Index factor = -1;  // classification
  double threshold = 0.0;
  Vector labels;      // one per dataset row
};

/// n_reg regression tasks y = M z with M ~ U[0,1]^K and n_cls median-threshold
/// tasks y = 1{z_i > m_i}; negative counts default to K each.
std::vector<DownstreamTask> make_downstream_tasks(const CodedDataset& data, int n_reg, int n_cls,
                                                  std::uint64_t seed);

/// Threshold splitting the train values of a column closest to half/half.
double balanced_threshold(const Vector& values);

struct OracleScores {
  std::optional<double> D, C, I, E;
};

/// Theoretical scores of a mixing for a probe ladder starting from a linear
/// probe. Throws NotAnalytic for random_mlp / random_linear.
OracleScores oracle_scores(const MixingSpec& mixing);

}  // namespace dcies

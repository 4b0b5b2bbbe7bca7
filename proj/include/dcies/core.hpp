#pragma once

// Domain types shared by every module: coded datasets, splits,
// normalization records and the importance-matrix contract.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcies/errors.hpp"

namespace dcies {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class FactorKind { continuous, categorical };

struct FactorSpec {
  std::string name;
  FactorKind kind = FactorKind::continuous;
  std::optional<int> cardinality;  // categorical only

  static FactorSpec continuous(std::string name);
  static FactorSpec categorical(std::string name, int cardinality);

  bool is_categorical() const { return kind == FactorKind::categorical; }
  int classes() const { return cardinality.value_or(0); }
  void validate() const;
};

enum class Split : std::uint8_t { train, validation, test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

struct ColumnStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Train-split statistics used to standardize a dataset. Categorical factor
/// entries are empty.
struct Normalization {
  std::vector<ColumnStats> codes;
  std::vector<std::optional<ColumnStats>> factors;
};

/// Paired codes (N x L) and factors (N x K) with per-row split labels.
///
/// Immutable after construction. The constructor checks the shape and value
/// invariants; categorical factors hold class indices in [0, cardinality).
class CodedDataset {
 public:
  CodedDataset(Matrix codes, Matrix factors, std::vector<FactorSpec> specs, std::vector<Split> split,
               std::optional<Normalization> normalization = std::nullopt);

  const Matrix& codes() const { return codes_; }
  const Matrix& factors() const { return factors_; }
  const std::vector<FactorSpec>& factor_specs() const { return specs_; }
  const FactorSpec& factor_spec(Index j) const { return specs_[static_cast<std::size_t>(j)]; }
  const std::vector<Split>& split() const { return split_; }
  const std::optional<Normalization>& normalization() const { return normalization_; }

  Index n_samples() const { return codes_.rows(); }
  Index code_dim() const { return codes_.cols(); }
  Index factor_count() const { return factors_.cols(); }

  const std::vector<Index>& rows(Split s) const;

  /// Rows of the code matrix belonging to split `s`.
  Matrix codes_for(Split s) const;
  Vector factor_for(Index j, Split s) const;
  /// Class indices of categorical factor `j` on split `s`.
  std::vector<int> labels_for(Index j, Split s) const;

 private:
  Matrix codes_;
  Matrix factors_;
  std::vector<FactorSpec> specs_;
  std::vector<Split> split_;
  std::optional<Normalization> normalization_;
  std::vector<Index> train_rows_, validation_rows_, test_rows_;
};

/// Standardizes codes and continuous factors with train-split statistics.
/// Throws ZeroVarianceColumn for a code column that is constant on train.
CodedDataset normalize_dataset(const CodedDataset& raw);

/// Nonnegative L x K matrix with unit column sums.
struct ImportanceMatrix {
  Matrix values;
  std::string probe_tag;

  Index code_dim() const { return values.rows(); }
  Index factor_count() const { return values.cols(); }
};

/// Row-normalized importances with per-row weights rho_i = (1/K) sum_k R_ik.
struct NormalizedRows {
  Matrix values;
  std::vector<double> row_weights;
  std::vector<bool> dead;  // rows with no importance mass
};

NormalizedRows row_distributions(const ImportanceMatrix& R);

/// Checks the importance contract: clamps negatives above -1e-9 to zero,
/// renormalizes columns within 1e-6 of unit sum, rejects everything else.
ImportanceMatrix validate_importance(const Matrix& values, std::string probe_tag = {});

inline constexpr double kSumTolerance = 1e-6;
inline constexpr double kNegativeTolerance = 1e-9;

}  // namespace dcies

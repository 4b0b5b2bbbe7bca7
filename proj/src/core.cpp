#include "dcies/core.hpp"

#include <cmath>

#include "dcies/kernels.hpp"

namespace dcies {

FactorSpec FactorSpec::continuous(std::string name) {
  return FactorSpec{std::move(name), FactorKind::continuous, std::nullopt};
}

FactorSpec FactorSpec::categorical(std::string name, int cardinality) {
  FactorSpec s{std::move(name), FactorKind::categorical, cardinality};
  s.validate();
  return s;
}

void FactorSpec::validate() const {
  if (kind == FactorKind::categorical) {
    if (!cardinality || *cardinality < 2)
      throw DatasetError("categorical factor '" + name + "' needs cardinality >= 2");
  } else if (cardinality) {
    throw DatasetError("continuous factor '" + name + "' must not carry a cardinality");
  }
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw DatasetError("unknown split label '" + s + "'");
}

CodedDataset::CodedDataset(Matrix codes, Matrix factors, std::vector<FactorSpec> specs,
                           std::vector<Split> split, std::optional<Normalization> normalization)
    : codes_(std::move(codes)),
      factors_(std::move(factors)),
      specs_(std::move(specs)),
      split_(std::move(split)),
      normalization_(std::move(normalization)) {
  const Index n = codes_.rows();
  if (n < 1 || codes_.cols() < 1 || factors_.cols() < 1)
    throw DatasetError("dataset needs N, L, K >= 1");
  if (factors_.rows() != n) throw DatasetError("codes and factors disagree on the number of rows");
  if (static_cast<Index>(specs_.size()) != factors_.cols())
    throw DatasetError("factor spec count does not match factor columns");
  if (static_cast<Index>(split_.size()) != n) throw DatasetError("split labels do not match rows");
  if (!codes_.allFinite()) throw DatasetError("codes contain non-finite values");
  if (!factors_.allFinite()) throw DatasetError("factors contain non-finite values");

  for (Index j = 0; j < factors_.cols(); ++j) {
    const auto& spec = specs_[static_cast<std::size_t>(j)];
    spec.validate();
    if (!spec.is_categorical()) continue;
    for (Index i = 0; i < n; ++i) {
      const double v = factors_(i, j);
      if (v != std::floor(v) || v < 0 || v >= spec.classes())
        throw DatasetError("categorical factor '" + spec.name + "' has value outside [0, cardinality)");
    }
  }
  for (Index i = 0; i < n; ++i) {
    switch (split_[static_cast<std::size_t>(i)]) {
      case Split::train: train_rows_.push_back(i); break;
      case Split::validation: validation_rows_.push_back(i); break;
      case Split::test: test_rows_.push_back(i); break;
    }
  }
}

const std::vector<Index>& CodedDataset::rows(Split s) const {
  switch (s) {
    case Split::train: return train_rows_;
    case Split::validation: return validation_rows_;
    case Split::test: return test_rows_;
  }
  return train_rows_;
}

Matrix CodedDataset::codes_for(Split s) const { return codes_(rows(s), Eigen::all); }

Vector CodedDataset::factor_for(Index j, Split s) const { return factors_(rows(s), j); }

std::vector<int> CodedDataset::labels_for(Index j, Split s) const {
  const auto& r = rows(s);
  std::vector<int> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = static_cast<int>(factors_(r[i], j));
  return out;
}

CodedDataset normalize_dataset(const CodedDataset& raw) {
  const auto& train = raw.rows(Split::train);
  if (train.empty()) throw EmptySplit("normalization needs a non-empty train split");

  Matrix codes = raw.codes();
  Matrix factors = raw.factors();
  Normalization record;

  const Matrix train_codes = raw.codes_for(Split::train);
  const auto code_stats = kernels::column_stats(train_codes);
  for (Index c = 0; c < codes.cols(); ++c) {
    const auto st = code_stats[static_cast<std::size_t>(c)];
    if (!(st.std > 0.0)) throw ZeroVarianceColumn(static_cast<std::size_t>(c));
    codes.col(c).array() = (codes.col(c).array() - st.mean) / st.std;
    record.codes.push_back(st);
  }

  for (Index j = 0; j < factors.cols(); ++j) {
    if (raw.factor_spec(j).is_categorical()) {
      record.factors.emplace_back(std::nullopt);
      continue;
    }
    const Matrix col = raw.factors()(train, Eigen::seqN(j, 1));
    auto st = kernels::column_stats(col).front();
    // A constant factor carries nothing to predict; keep it centered only.
    if (!(st.std > 0.0)) st.std = 1.0;
    factors.col(j).array() = (factors.col(j).array() - st.mean) / st.std;
    record.factors.emplace_back(st);
  }
  return CodedDataset(std::move(codes), std::move(factors), raw.factor_specs(), raw.split(),
                      std::move(record));
}

NormalizedRows row_distributions(const ImportanceMatrix& R) {
  const Index L = R.values.rows();
  const Index K = R.values.cols();
  NormalizedRows out;
  out.values = Matrix::Zero(L, K);
  out.row_weights.assign(static_cast<std::size_t>(L), 0.0);
  out.dead.assign(static_cast<std::size_t>(L), false);
  for (Index i = 0; i < L; ++i) {
    const double mass = R.values.row(i).sum();
    if (mass > 0.0) {
      out.values.row(i) = R.values.row(i) / mass;
      out.row_weights[static_cast<std::size_t>(i)] = mass / static_cast<double>(K);
    } else {
      out.values.row(i).setConstant(1.0 / static_cast<double>(K));
      out.dead[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

ImportanceMatrix validate_importance(const Matrix& values, std::string probe_tag) {
  if (!values.allFinite()) throw DatasetError("importance matrix has non-finite entries");
  Matrix R = values;
  for (Index j = 0; j < R.cols(); ++j) {
    for (Index i = 0; i < R.rows(); ++i) {
      if (R(i, j) < -kNegativeTolerance)
        throw NegativeImportance(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      if (R(i, j) < 0.0) R(i, j) = 0.0;
    }
    const double sum = R.col(j).sum();
    if (std::abs(sum - 1.0) > kSumTolerance) throw InvalidImportance(static_cast<std::size_t>(j), sum);
    R.col(j) /= sum;
  }
  return ImportanceMatrix{std::move(R), std::move(probe_tag)};
}

}  // namespace dcies

#include "dcies/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcies/kernels.hpp"
#include "dcies/rng.hpp"

namespace dcies {

void SageConfig::validate() const {
  if (n_permutations < 10) throw ConfigError("SAGE needs at least 10 permutations");
  if (marginal_sample_size < 1) throw ConfigError("SAGE marginal sample size must be positive");
  if (!(convergence_tol > 0)) throw ConfigError("SAGE convergence tolerance must be positive");
  if (max_evals < 1) throw ConfigError("SAGE evaluation budget must be positive");
  if (window < 1) throw ConfigError("SAGE window must be positive");
}

namespace {

/// Clamps negatives, normalizes, and falls back to uniform on zero mass.
Vector finalize_column(const Vector& raw, ImportanceDiagnostics& diag) {
  const Index L = raw.size();
  double positive = 0.0, negative = 0.0;
  for (Index i = 0; i < L; ++i) (raw(i) > 0 ? positive : negative) += std::abs(raw(i));
  const double total = positive + negative;
  diag.clamped_fraction = total > 0 ? negative / total : 0.0;
  diag.clamp_warning = diag.clamped_fraction > 0.05;
  if (!(positive > 0.0)) {
    diag.zero_mass = true;
    return Vector::Constant(L, 1.0 / static_cast<double>(L));
  }
  return raw.cwiseMax(0.0) / positive;
}

}  // namespace

ImportanceMatrix coefficient_importance(const Matrix& weights, std::string probe_tag) {
  Matrix R = weights.cwiseAbs();
  for (Index j = 0; j < R.cols(); ++j) {
    const double s = R.col(j).sum();
    if (!(s > 0.0)) throw ZeroColumn(static_cast<std::size_t>(j));
    R.col(j) /= s;
  }
  return validate_importance(R, std::move(probe_tag));
}

GiniResult gini_importance(const std::vector<FittedProbe>& forests) {
  if (forests.empty()) throw ConfigError("gini importance needs at least one forest");
  const Index L = forests.front().input_dim();
  const auto K = static_cast<Index>(forests.size());
  Matrix R(L, K);
  std::vector<ImportanceDiagnostics> diags(static_cast<std::size_t>(K));
  for (Index j = 0; j < K; ++j) {
    const auto* forest = forests[static_cast<std::size_t>(j)].forest();
    if (!forest) throw ConfigError("gini importance requires forest probes");
    if (forest->input_dim() != L) throw SchemaMismatch("forests disagree on input width");
    auto& d = diags[static_cast<std::size_t>(j)];
    d.method = "gini";
    R.col(j) = finalize_column(forest->impurity_decrease(), d);
    d.degenerate_forest = d.zero_mass;
  }
  return GiniResult{validate_importance(R, "rf/gini"), std::move(diags)};
}

SageResult sage_importance(const FittedProbe& probe, const CodedDataset& data, Index factor, const SageConfig& cfg) {
  cfg.validate();
  if (probe.input_dim() != data.code_dim()) throw SchemaMismatch("probe does not match the dataset schema");
  if (data.rows(Split::train).empty()) throw MaskingUnsupported("marginal imputation needs train rows");
  if (data.rows(Split::test).empty()) throw EmptySplit("SAGE evaluates on the test split");

  const Matrix eval = data.codes_for(Split::test);
  const Matrix background = data.codes_for(Split::train);
  const Targets y = targets_for(data, factor, Split::test);
  const Index L = data.code_dim();
  const int m = cfg.marginal_sample_size;
  const bool classify = y.task == TaskKind::classification;

  Rng rng(cfg.seed);
  std::uniform_int_distribution<Index> pick_eval(0, eval.rows() - 1);
  std::uniform_int_distribution<Index> pick_bg(0, background.rows() - 1);

  Vector sum = Vector::Zero(L);
  Vector previous = Vector::Zero(L);
  double empty_sum = 0.0, full_sum = 0.0;
  int count = 0;
  int windows = 0;
  long long evals = 0;
  bool converged = false;
  const long long per_permutation = static_cast<long long>(L + 1) * m;

  std::vector<int> base_order(static_cast<std::size_t>(L));
  std::iota(base_order.begin(), base_order.end(), 0);

  while (count < cfg.n_permutations) {
    int P = std::min(cfg.window, cfg.n_permutations - count);
    P = static_cast<int>(std::min<long long>(P, (cfg.max_evals - evals) / per_permutation));
    if (P <= 0) break;

    kernels::MaskedBatchPlan plan;
    plan.eval = &eval;
    plan.background = &background;
    plan.draws = m;
    for (int p = 0; p < P; ++p) {
      plan.samples.push_back(pick_eval(rng));
      auto order = base_order;
      std::shuffle(order.begin(), order.end(), rng);
      plan.orders.push_back(std::move(order));
      for (int k = 0; k < m; ++k) plan.background_rows.push_back(pick_bg(rng));
    }
    const Matrix batch = kernels::masked_batch(plan);

    const Index rows = batch.rows();
    Matrix pred;
    constexpr Index kChunk = 65536;
    for (Index start = 0; start < rows; start += kChunk) {
      const Index len = std::min(kChunk, rows - start);
      Matrix part = probe.predict(batch.middleRows(start, len));
      if (start == 0) pred.resize(rows, part.cols());
      pred.middleRows(start, len) = part;
    }
    evals += rows;

    for (int p = 0; p < P; ++p) {
      const Index sample = plan.samples[static_cast<std::size_t>(p)];
      double prev_loss = 0.0;
      for (Index s = 0; s <= L; ++s) {
        const Index first = (static_cast<Index>(p) * (L + 1) + s) * m;
        const Eigen::RowVectorXd mean = pred.middleRows(first, m).colwise().mean();
        double loss;
        if (classify) {
          loss = -std::log(std::max(mean(y.labels[static_cast<std::size_t>(sample)]), kProbabilityFloor));
        } else {
          const double d = mean(0) - y.values(sample);
          loss = d * d;
        }
        if (s == 0) {
          empty_sum += loss;
        } else {
          sum(plan.orders[static_cast<std::size_t>(p)][static_cast<std::size_t>(s - 1)]) += prev_loss - loss;
        }
        if (s == L) full_sum += loss;
        prev_loss = loss;
      }
    }
    count += P;
    ++windows;

    const Vector estimate = sum / static_cast<double>(count);
    const double scale = estimate.cwiseAbs().sum();
    if (windows >= 2 && count >= 10) {
      const double shift = (estimate - previous).cwiseAbs().maxCoeff();
      if (scale <= 1e-300 || shift < cfg.convergence_tol * scale) {
        converged = true;
        break;
      }
    }
    previous = estimate;
  }

  SageResult out;
  out.raw = count > 0 ? Vector(sum / static_cast<double>(count)) : Vector::Zero(L);
  out.diagnostics.method = "sage";
  out.diagnostics.not_converged = !converged;
  out.diagnostics.permutations = count;
  out.diagnostics.evals = evals;
  out.diagnostics.empty_loss = count > 0 ? empty_sum / count : 0.0;
  out.diagnostics.full_loss = count > 0 ? full_sum / count : 0.0;
  out.column = finalize_column(out.raw, out.diagnostics);
  return out;
}

ImportanceResult importance_for(ProbeClass probe_class, const std::vector<FittedProbe>& probes,
                                const CodedDataset& data, const ImportanceConfig& cfg) {
  if (probes.empty()) throw ConfigError("importance needs one probe per factor");
  if (probe_class == ProbeClass::rf) {
    auto g = gini_importance(probes);
    return ImportanceResult{std::move(g.matrix), std::move(g.diagnostics)};
  }

  const Index L = data.code_dim();
  const auto K = static_cast<Index>(probes.size());
  Matrix R(L, K);
  std::vector<ImportanceDiagnostics> diags(static_cast<std::size_t>(K));
  std::vector<std::string> errors(static_cast<std::size_t>(K));

#pragma omp parallel for schedule(dynamic)
  for (Index j = 0; j < K; ++j) {
    const auto& probe = probes[static_cast<std::size_t>(j)];
    try {
      const auto* lin = probe.linear();
      if (cfg.coefficients_for_linear && lin) {
        const Vector w = lin->weights().cwiseAbs().rowwise().sum();
        R.col(j) = coefficient_importance(w).values.col(0);
        diags[static_cast<std::size_t>(j)].method = "coefficient";
      } else {
        SageConfig sc = cfg.sage;
        sc.seed = derive_seed(cfg.sage.seed, {static_cast<std::uint64_t>(probe.factor())});
        auto res = sage_importance(probe, data, probe.factor(), sc);
        R.col(j) = res.column;
        diags[static_cast<std::size_t>(j)] = res.diagnostics;
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(j)] = e.what();
    }
  }
  for (Index j = 0; j < K; ++j)
    if (!errors[static_cast<std::size_t>(j)].empty())
      throw Error("importance for factor " + std::to_string(j) + ": " + errors[static_cast<std::size_t>(j)]);
  return ImportanceResult{validate_importance(R, std::string(to_string(probe_class)) + "/sage"), std::move(diags)};
}

}  // namespace dcies

#pragma once

// Experiment orchestration: datasets per (representation, seed), probe
// ladders, importance, scores, seed aggregation, downstream performance and
// score/performance correlations.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcies/config.hpp"
#include "dcies/importance.hpp"
#include "dcies/metrics.hpp"
#include "dcies/probes.hpp"

namespace dcies {

/// Curves of every factor under one capacity scale.
struct ScaledCurves {
  CapacityScale scale = CapacityScale::natural;
  std::vector<LossCapacityCurve> curves;
};

struct RunResult {
  std::string representation;
  ProbeClass probe = ProbeClass::mlp;
  std::uint64_t seed = 0;
  ScoreReport scores;  // E from the first configured capacity scale
  std::vector<ScaledCurves> curves;
  ImportanceMatrix importance;
  std::vector<ImportanceDiagnostics> importance_diagnostics;
  std::vector<std::string> factor_names;
};

struct RunFailure {
  std::string representation;
  ProbeClass probe = ProbeClass::mlp;
  std::uint64_t seed = 0;
  std::string error;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across seeds
};

struct Aggregate {
  std::string representation;
  ProbeClass probe = ProbeClass::mlp;
  std::size_t n_seeds = 0;
  Stat D, C, I, E, S;
  std::vector<std::string> verdicts;  // one per seed
};

struct DownstreamRecord {
  std::string representation;
  ProbeClass probe = ProbeClass::mlp;  // low-capacity probe family
  std::uint64_t seed = 0;
  double regression = 0.0;      // mean clamped R^2
  double classification = 0.0;  // mean accuracy
  double mean = 0.0;            // over all tasks
  std::vector<double> per_task;
};

struct CorrelationEntry {
  std::string score;  // D, C, I, E
  std::string scoring_probe;
  std::string downstream_probe;
  std::string task_type;  // all, regression, classification
  std::size_t n = 0;
  double pearson = 0.0, pearson_p = 1.0;
  double spearman = 0.0, spearman_p = 1.0;
};

struct CorrelationReport {
  std::vector<CorrelationEntry> entries;
  std::string caveat;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<RunFailure> failures;
  std::vector<Aggregate> aggregates;
  std::vector<DownstreamRecord> downstream;
  std::optional<CorrelationReport> correlations;
};

/// Normalized dataset of a representation at a seed. Synthetic sources share
/// the factor matrix and split across representations at a given seed.
CodedDataset build_dataset(const ExperimentConfig& cfg, const RepresentationSource& rep, std::uint64_t seed);

/// The mixing a synthetic source actually uses at a seed (its seed is derived
/// from the experiment seed). Regenerate with make_synthetic_dataset to get
/// the generator's permutation or weights.
MixingSpec seeded_mixing(const MixingSpec& m, std::uint64_t seed);

/// Seed of the probe fits for a run; independent of the representation so
/// that representations are compared under identical probe randomness.
std::uint64_t run_seed(std::uint64_t seed, ProbeClass probe);

/// Ladder for a probe class on a dataset.
CapacityLadder ladder_for(const ExperimentConfig& cfg, ProbeClass probe, const CodedDataset& data);

/// Curves under every configured scale from trained ladder losses.
std::vector<ScaledCurves> curves_for(const ExperimentConfig& cfg, const LadderResult& lr, const CodedDataset& data);

/// Ladder index whose probes supply the importance matrix for `fl`.
std::size_t importance_index(const ExperimentConfig& cfg, const FactorLadder& fl);

/// Importance, scores and verdict from trained ladders and the probes kept
/// at the importance capacity.
RunResult score_run(const ExperimentConfig& cfg, const CodedDataset& data, const std::string& representation,
                    ProbeClass probe, std::uint64_t seed, const LadderResult& lr,
                    const std::vector<FittedProbe>& importance_probes);

/// Full pipeline for one combination.
RunResult run_combination(const ExperimentConfig& cfg, const CodedDataset& data, const std::string& representation,
                          ProbeClass probe, std::uint64_t seed);

std::vector<Aggregate> aggregate_runs(const std::vector<RunResult>& runs);

/// Low-capacity downstream probe on every task: linear for mlp, a forest of
/// depth `rf_depth` for rf. Regression scores are R^2 clamped to [0, 1].
DownstreamRecord downstream_performance(const CodedDataset& data, const std::vector<DownstreamTask>& tasks,
                                        ProbeClass probe, const ExperimentConfig& cfg, std::uint64_t seed);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);
/// Average ranks (1-based), ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& x);
/// Two-sided p-value of a correlation coefficient under the t approximation.
double correlation_p_value(double r, std::size_t n);

struct Correlation {
  double pearson = 0.0, pearson_p = 1.0, spearman = 0.0, spearman_p = 1.0;
};

/// Throws InsufficientData for fewer than three pairs.
Correlation correlate(const std::vector<double>& scores, const std::vector<double>& performance);

/// Scores (per run) against downstream performance of the same
/// (representation, seed). Pairs like probe families unless cross pairing is on.
CorrelationReport correlate_runs(const std::vector<RunResult>& runs, const std::vector<DownstreamRecord>& downstream,
                                 bool cross_pairing);

extern const char* const kCorrelationCaveat;

/// Every combination as an independent task; failures are recorded and the
/// run only throws when every combination fails.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace dcies

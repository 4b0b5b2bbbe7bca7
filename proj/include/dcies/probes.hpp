#pragma once

// Probe classes with explicit capacity ladders, fitting, evaluation against
// baseline losses, and ladder-wide training.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dcies/core.hpp"
#include "dcies/models.hpp"

namespace dcies {

enum class ProbeClass { mlp, rff, rf };

/// `natural` is the per-class default: log for mlp (log10 of one plus excess
/// parameters) and rff (log2 feature count), raw max depth for rf.
enum class CapacityScale { natural, log, linear };

const char* to_string(ProbeClass p);
ProbeClass parse_probe_class(const std::string& s);
const char* to_string(CapacityScale s);
CapacityScale parse_capacity_scale(const std::string& s);

/// One rung of a ladder. Exactly one of the size parameters is meaningful for
/// a given probe class; hidden_width == 0 on an mlp ladder is the linear probe.
struct LadderEntry {
  double capacity = 0.0;
  int hidden_width = 0;
  int max_depth = 0;
  long long n_features = 0;
};

struct CapacityLadder {
  ProbeClass probe_class = ProbeClass::mlp;
  CapacityScale scale = CapacityScale::natural;
  std::vector<LadderEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<double> capacities() const;
  bool starts_linear() const { return probe_class == ProbeClass::mlp && !entries.empty() && entries[0].hidden_width == 0; }
};

struct LadderDims {
  Index code_dim = 1;      // L
  Index factor_count = 1;  // K
};

struct LadderConfig {
  std::vector<int> mlp_width_multipliers{2, 4, 8, 16, 32, 64, 128, 256, 512};
  bool mlp_include_linear = true;
  std::vector<int> rf_depths{1, 2, 4, 8, 16, 32};
  int rff_min_log2 = 4;
  int rff_max_log2 = 17;
  int rff_stride = 1;
  CapacityScale scale = CapacityScale::natural;
};

struct TrainingConfig {
  AdamConfig mlp;
  ForestConfig rf;
  RffConfig rff;
};

CapacityLadder build_ladder(ProbeClass probe_class, LadderDims dims, const LadderConfig& cfg);

/// Capacity of a ladder entry under `scale` for a head with `outputs` units.
double capacity_value(ProbeClass probe_class, const LadderEntry& entry, Index code_dim, Index outputs,
                      CapacityScale scale);

/// Immutable trained predictor for one factor at one ladder rung.
class FittedProbe {
 public:
  FittedProbe(ProbeClass probe_class, std::size_t ladder_index, LadderEntry entry, Index factor, TaskKind task,
              int n_classes, std::shared_ptr<const ProbeModel> model, TrainingDiagnostics diagnostics = {});

  ProbeClass probe_class() const { return probe_class_; }
  std::size_t ladder_index() const { return ladder_index_; }
  const LadderEntry& entry() const { return entry_; }
  Index factor() const { return factor_; }
  TaskKind task() const { return task_; }
  int n_classes() const { return n_classes_; }
  Index input_dim() const { return model_->input_dim(); }
  const ProbeModel& model() const { return *model_; }
  const TrainingDiagnostics& diagnostics() const { return diagnostics_; }

  Matrix predict(const Matrix& X) const { return model_->predict(X); }

  const LinearModel* linear() const { return dynamic_cast<const LinearModel*>(model_.get()); }
  const ForestModel* forest() const { return dynamic_cast<const ForestModel*>(model_.get()); }

 private:
  ProbeClass probe_class_;
  std::size_t ladder_index_;
  LadderEntry entry_;
  Index factor_;
  TaskKind task_;
  int n_classes_;
  std::shared_ptr<const ProbeModel> model_;
  TrainingDiagnostics diagnostics_;
};

struct ProbeLoss {
  Index factor = 0;
  std::size_t capacity_index = 0;
  double raw = 0.0;
  double normalized = 0.0;
};

/// Baseline loss of factor j on `split`: MSE of the train mean for continuous
/// factors, ln(cardinality) for categorical ones.
double baseline_loss(const CodedDataset& data, Index factor, Split split = Split::test);

inline double normalized_loss(double raw, double baseline) {
  if (!(baseline > 0.0)) return raw > 0.0 ? 1.0 : 0.0;
  return std::min(raw / baseline, 1.0);
}

FittedProbe fit_probe(const CodedDataset& data, Index factor, ProbeClass probe_class, std::size_t ladder_index,
                      const LadderEntry& entry, const TrainingConfig& cfg, std::uint64_t seed);

ProbeLoss evaluate_probe(const FittedProbe& probe, const CodedDataset& data, Split split = Split::test);

/// Which fitted probes train_ladder keeps in memory.
enum class KeepProbes { none, best, all };

struct FactorLadder {
  Index factor = 0;
  std::vector<ProbeLoss> losses;                   // one per ladder rung
  std::vector<double> capacities;                  // ladder capacities for this factor's head
  std::vector<std::optional<FittedProbe>> probes;  // kept per KeepProbes
  std::vector<std::uint64_t> seeds;
  std::size_t best_index = 0;
  double best_loss = 1.0;  // normalized
};

struct LadderResult {
  CapacityLadder ladder;
  std::vector<FactorLadder> factors;
};

/// Seed of the (factor, capacity) fit task.
std::uint64_t probe_seed(std::uint64_t experiment_seed, Index factor, std::size_t capacity_index);

/// Trains one probe per (factor, rung); tasks run in parallel. With
/// `keep_index` set, the probe at that rung is kept as well.
LadderResult train_ladder(const CodedDataset& data, const CapacityLadder& ladder, const std::vector<Index>& factors,
                          const TrainingConfig& cfg, std::uint64_t seed, KeepProbes keep = KeepProbes::best,
                          std::optional<std::size_t> keep_index = std::nullopt);

// Checkpoints: CBOR-encoded, self-describing documents with a schema version.
inline constexpr int kCheckpointSchemaVersion = 1;
void save_probe(const std::filesystem::path& path, const FittedProbe& probe, std::uint64_t seed);
FittedProbe load_probe(const std::filesystem::path& path, std::uint64_t* seed = nullptr);

}  // namespace dcies

#pragma once

// Disentanglement, completeness, informativeness, explicitness and size
// scores, plus the identifiability verdict built on top of them.

#include <optional>
#include <string>
#include <vector>

#include "dcies/core.hpp"
#include "dcies/probes.hpp"

namespace dcies {

/// Normalized test loss against capacity for one factor.
struct LossCapacityCurve {
  Index factor = 0;
  std::vector<double> capacities;
  std::vector<double> losses;  // normalized, clamped to [floor, baseline]
  double baseline = 1.0;
  double floor = 0.0;
  std::size_t best_index = 0;  // smallest index attaining the minimum
  double best_loss = 1.0;
  CapacityScale scale = CapacityScale::natural;
};

/// Builds a curve, clamping losses into [floor, baseline] and locating the
/// lowest-loss capacity (ties resolve to the smallest index).
LossCapacityCurve make_curve(Index factor, std::vector<double> capacities, std::vector<double> losses,
                             double baseline = 1.0, double floor = 0.0,
                             CapacityScale scale = CapacityScale::natural);

struct DisentanglementResult {
  double D = 0.0;
  std::vector<double> per_code;
  std::vector<double> weights;  // rho_i
  std::vector<bool> dead;
  bool undefined_base = false;  // K == 1
};

struct CompletenessResult {
  double C = 0.0;
  std::vector<double> per_factor;
  bool undefined_base = false;  // L == 1
};

struct InformativenessResult {
  double I = 0.0;
  std::vector<double> per_factor;
};

/// Entropy of `p` in log base `base`, with 0 log 0 = 0.
double entropy(const Eigen::Ref<const Vector>& p, double base);

DisentanglementResult disentanglement(const ImportanceMatrix& R);
CompletenessResult completeness(const ImportanceMatrix& R);
InformativenessResult informativeness(const std::vector<LossCapacityCurve>& curves);

/// Trapezoidal area between the curve and its best loss, up to the best index.
double aulcc(const LossCapacityCurve& curve);

/// 1 - AULCC / (0.5 (kappa_T - kappa_1)(baseline - floor)).
/// Throws DegenerateBaseline when floor >= baseline.
double explicitness(const LossCapacityCurve& curve);

double size_score(Index K, Index L);

enum class Verdict { sign_and_permutation, permutation_and_reparametrisation, linear, none };

const char* to_string(Verdict v);

struct VerdictInput {
  double D = 0.0, C = 0.0, I = 0.0, E = 0.0;
  const ImportanceMatrix* R = nullptr;
  Index K = 0, L = 0;
  double tol = 0.05;
  bool first_rung_linear = true;  // the ladder starts from a linear probe
};

struct VerdictResult {
  Verdict verdict = Verdict::none;
  std::optional<std::vector<int>> permutation;  // factor j -> code argmax_i R_ij
  bool near_permutation = false;                // R within tol of a permutation matrix
  std::vector<std::string> flags;
  std::string caveat;
};

VerdictResult identifiability_verdict(const VerdictInput& in);

/// Whether R is within `tol` (entry-wise) of some permutation matrix.
bool is_near_permutation(const Matrix& R, double tol);

struct PerFactorScore {
  Index index = 0;
  std::string name;
  double C = 0.0, I = 0.0, E = 0.0;
  double aulcc = 0.0;
  std::size_t best_index = 0;
  double best_loss = 1.0;
};

struct PerCodeScore {
  Index index = 0;
  double D = 0.0;
  double weight = 0.0;
  bool dead = false;
};

/// Scores for one (representation, probe class, seed) combination.
struct ScoreReport {
  double D = 0.0, C = 0.0, I = 0.0, E = 0.0, S = 0.0;
  std::vector<PerCodeScore> per_code;
  std::vector<PerFactorScore> per_factor;
  VerdictResult verdict;
  std::vector<std::pair<std::string, double>> explicitness_by_scale;
  std::vector<std::string> flags;
};

struct ScoreInputs {
  const ImportanceMatrix* R = nullptr;
  const std::vector<LossCapacityCurve>* curves = nullptr;
  std::vector<std::string> factor_names;
  Index K = 0, L = 0;
  double verdict_tol = 0.05;
  bool first_rung_linear = true;
};

ScoreReport compute_scores(const ScoreInputs& in);

}  // namespace dcies

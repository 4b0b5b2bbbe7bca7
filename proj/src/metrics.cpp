#include "dcies/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace dcies {

LossCapacityCurve make_curve(Index factor, std::vector<double> capacities, std::vector<double> losses,
                             double baseline, double floor, CapacityScale scale) {
  if (capacities.size() != losses.size() || capacities.empty())
    throw ConfigError("curve needs one loss per capacity");
  for (std::size_t t = 1; t < capacities.size(); ++t)
    if (!(capacities[t] > capacities[t - 1])) throw ConfigError("curve capacities must be strictly increasing");
  LossCapacityCurve c;
  c.factor = factor;
  c.capacities = std::move(capacities);
  c.baseline = baseline;
  c.floor = floor;
  c.scale = scale;
  c.losses.reserve(losses.size());
  for (double l : losses) c.losses.push_back(std::clamp(l, std::min(floor, baseline), baseline));
  c.best_index = 0;
  c.best_loss = c.losses[0];
  for (std::size_t t = 1; t < c.losses.size(); ++t) {
    if (c.losses[t] < c.best_loss) {
      c.best_loss = c.losses[t];
      c.best_index = t;
    }
  }
  return c;
}

double entropy(const Eigen::Ref<const Vector>& p, double base) {
  double h = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return h / std::log(base);
}

DisentanglementResult disentanglement(const ImportanceMatrix& R) {
  const Index L = R.values.rows();
  const Index K = R.values.cols();
  const NormalizedRows rows = row_distributions(R);
  DisentanglementResult out;
  out.weights = rows.row_weights;
  out.dead = rows.dead;
  out.per_code.assign(static_cast<std::size_t>(L), 1.0);
  if (K == 1) {
    out.undefined_base = true;
    out.D = 1.0;
    return out;
  }
  for (Index i = 0; i < L; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out.per_code[ui] = 1.0 - entropy(rows.values.row(i).transpose(), static_cast<double>(K));
    out.D += out.weights[ui] * out.per_code[ui];
  }
  return out;
}

CompletenessResult completeness(const ImportanceMatrix& R) {
  const Index L = R.values.rows();
  const Index K = R.values.cols();
  CompletenessResult out;
  out.per_factor.assign(static_cast<std::size_t>(K), 1.0);
  if (L == 1) {
    out.undefined_base = true;
    out.C = 1.0;
    return out;
  }
  double total = 0.0;
  for (Index j = 0; j < K; ++j) {
    const double c = 1.0 - entropy(R.values.col(j), static_cast<double>(L));
    out.per_factor[static_cast<std::size_t>(j)] = c;
    total += c;
  }
  out.C = total / static_cast<double>(K);
  return out;
}

InformativenessResult informativeness(const std::vector<LossCapacityCurve>& curves) {
  InformativenessResult out;
  if (curves.empty()) return out;
  double total = 0.0;
  for (const auto& c : curves) {
    const double i = std::clamp(1.0 - c.best_loss, 0.0, 1.0);
    out.per_factor.push_back(i);
    total += i;
  }
  out.I = total / static_cast<double>(curves.size());
  return out;
}

double aulcc(const LossCapacityCurve& curve) {
  double area = 0.0;
  for (std::size_t t = 1; t <= curve.best_index; ++t) {
    const double dk = curve.capacities[t] - curve.capacities[t - 1];
    area += (0.5 * (curve.losses[t - 1] + curve.losses[t]) - curve.best_loss) * dk;
  }
  return area;
}

double explicitness(const LossCapacityCurve& curve) {
  if (!(curve.floor < curve.baseline))
    throw DegenerateBaseline("explicitness needs a floor loss below the baseline loss");
  const double span = curve.capacities.back() - curve.capacities.front();
  const double normalizer = 0.5 * span * (curve.baseline - curve.floor);
  if (curve.best_index == 0) return 1.0;
  return 1.0 - aulcc(curve) / normalizer;
}

double size_score(Index K, Index L) {
  if (K < 1 || L < 1) throw ConfigError("size needs K, L >= 1");
  return static_cast<double>(K) / static_cast<double>(L);
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::sign_and_permutation: return "sign_and_permutation";
    case Verdict::permutation_and_reparametrisation: return "permutation_and_reparametrisation";
    case Verdict::linear: return "linear";
    case Verdict::none: return "none";
  }
  return "?";
}

namespace {

std::vector<int> column_argmax(const Matrix& R) {
  std::vector<int> p(static_cast<std::size_t>(R.cols()));
  for (Index j = 0; j < R.cols(); ++j) {
    Index arg = 0;
    R.col(j).maxCoeff(&arg);
    p[static_cast<std::size_t>(j)] = static_cast<int>(arg);
  }
  return p;
}

constexpr const char* kCaveat =
    "importance-based verdict: a code with zero importance is unused, but a code the probe uses can still "
    "receive zero importance under average-performance measures, so D/C-based equivalence classes are advisory";

}  // namespace

bool is_near_permutation(const Matrix& R, double tol) {
  if (R.rows() != R.cols()) return false;
  const auto p = column_argmax(R);
  if (std::set<int>(p.begin(), p.end()).size() != p.size()) return false;
  for (Index j = 0; j < R.cols(); ++j)
    for (Index i = 0; i < R.rows(); ++i) {
      const double target = i == p[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      if (std::abs(R(i, j) - target) > tol) return false;
    }
  return true;
}

VerdictResult identifiability_verdict(const VerdictInput& in) {
  VerdictResult out;
  out.caveat = kCaveat;
  const double hi = 1.0 - in.tol;
  const bool dc = in.D >= hi && in.C >= hi;
  const bool ie = in.I >= hi && in.E >= hi;

  if (dc && in.I >= hi && in.E >= hi && in.K == in.L) {
    if (in.first_rung_linear) {
      out.verdict = Verdict::sign_and_permutation;
    } else {
      out.flags.push_back("first_rung_not_linear");
      out.verdict = Verdict::permutation_and_reparametrisation;
    }
  } else if (dc && in.I >= hi) {
    out.verdict = Verdict::permutation_and_reparametrisation;
  } else if (ie) {
    if (in.first_rung_linear) {
      out.verdict = Verdict::linear;
    } else {
      out.flags.push_back("first_rung_not_linear");
      out.verdict = Verdict::none;
    }
  }

  if (in.K == in.L && dc && in.R) {
    out.permutation = column_argmax(in.R->values);
    out.near_permutation = is_near_permutation(in.R->values, in.tol);
  }
  return out;
}

ScoreReport compute_scores(const ScoreInputs& in) {
  if (!in.R || !in.curves) throw ConfigError("scores need an importance matrix and curves");
  ScoreReport rep;
  const auto d = disentanglement(*in.R);
  const auto c = completeness(*in.R);
  const auto info = informativeness(*in.curves);
  rep.D = d.D;
  rep.C = c.C;
  rep.I = info.I;
  rep.S = size_score(in.K, in.L);
  if (d.undefined_base) rep.flags.push_back("disentanglement_undefined_base");
  if (c.undefined_base) rep.flags.push_back("completeness_undefined_base");

  for (std::size_t i = 0; i < d.per_code.size(); ++i)
    rep.per_code.push_back(PerCodeScore{static_cast<Index>(i), d.per_code[i], d.weights[i], d.dead[i]});

  double e_total = 0.0;
  for (std::size_t j = 0; j < in.curves->size(); ++j) {
    const auto& curve = (*in.curves)[j];
    PerFactorScore f;
    f.index = curve.factor;
    f.name = j < in.factor_names.size() ? in.factor_names[j] : "z" + std::to_string(j);
    f.C = j < c.per_factor.size() ? c.per_factor[j] : 0.0;
    f.I = info.per_factor[j];
    f.E = explicitness(curve);
    f.aulcc = aulcc(curve);
    f.best_index = curve.best_index;
    f.best_loss = curve.best_loss;
    e_total += f.E;
    rep.per_factor.push_back(std::move(f));
  }
  rep.E = in.curves->empty() ? 0.0 : e_total / static_cast<double>(in.curves->size());

  VerdictInput vi;
  vi.D = rep.D;
  vi.C = rep.C;
  vi.I = rep.I;
  vi.E = rep.E;
  vi.R = in.R;
  vi.K = in.K;
  vi.L = in.L;
  vi.tol = in.verdict_tol;
  vi.first_rung_linear = in.first_rung_linear;
  rep.verdict = identifiability_verdict(vi);
  return rep;
}

}  // namespace dcies

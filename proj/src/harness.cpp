#include "dcies/harness.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dcies/io.hpp"
#include "dcies/rng.hpp"

namespace dcies {

const char* const kCorrelationCaveat =
    "p-values come from a t approximation over few, non-independent observations; read them as rough "
    "signals of significance rather than exact probabilities";

CodedDataset build_dataset(const ExperimentConfig& cfg, const RepresentationSource& rep, std::uint64_t seed) {
  if (rep.files) {
    io::SplitFallback fb{cfg.synthetic.train_fraction, cfg.synthetic.validation_fraction,
                         derive_seed(seed, {hash_name("split")})};
    return normalize_dataset(io::load_dataset(*rep.files, fb));
  }
  if (!rep.mixing) throw ConfigError("representation '" + rep.name + "' has neither a mixing nor files");
  return normalize_dataset(make_synthetic_dataset(cfg.synthetic, seeded_mixing(*rep.mixing, seed), seed));
}

MixingSpec seeded_mixing(const MixingSpec& m, std::uint64_t seed) {
  MixingSpec out = m;
  out.seed = derive_seed(seed, {hash_name("mixing"), m.seed});
  return out;
}

std::uint64_t run_seed(std::uint64_t seed, ProbeClass probe) {
  return derive_seed(seed, {hash_name(to_string(probe))});
}

CapacityLadder ladder_for(const ExperimentConfig& cfg, ProbeClass probe, const CodedDataset& data) {
  LadderConfig lc = cfg.ladder;
  lc.scale = cfg.capacity_scales.front();
  return build_ladder(probe, LadderDims{data.code_dim(), data.factor_count()}, lc);
}

std::vector<ScaledCurves> curves_for(const ExperimentConfig& cfg, const LadderResult& lr, const CodedDataset& data) {
  std::vector<ScaledCurves> out;
  for (auto scale : cfg.capacity_scales) {
    ScaledCurves sc{scale, {}};
    for (const auto& fl : lr.factors) {
      const auto& spec = data.factor_spec(fl.factor);
      const Index outputs = spec.is_categorical() ? spec.classes() : 1;
      std::vector<double> caps, losses;
      for (std::size_t t = 0; t < lr.ladder.size(); ++t) {
        caps.push_back(capacity_value(lr.ladder.probe_class, lr.ladder.entries[t], data.code_dim(), outputs, scale));
        losses.push_back(fl.losses[t].normalized);
      }
      sc.curves.push_back(make_curve(fl.factor, std::move(caps), std::move(losses), 1.0, cfg.loss_floor, scale));
    }
    out.push_back(std::move(sc));
  }
  return out;
}

std::size_t importance_index(const ExperimentConfig& cfg, const FactorLadder& fl) {
  if (cfg.importance_capacity.best) return fl.best_index;
  if (cfg.importance_capacity.index >= fl.losses.size())
    throw ConfigError("importance_capacity index beyond the ladder");
  return cfg.importance_capacity.index;
}

RunResult score_run(const ExperimentConfig& cfg, const CodedDataset& data, const std::string& representation,
                    ProbeClass probe, std::uint64_t seed, const LadderResult& lr,
                    const std::vector<FittedProbe>& importance_probes) {
  RunResult run;
  run.representation = representation;
  run.probe = probe;
  run.seed = seed;
  for (const auto& s : data.factor_specs()) run.factor_names.push_back(s.name);
  run.curves = curves_for(cfg, lr, data);

  ImportanceConfig ic = cfg.importance;
  ic.sage.seed = derive_seed(run_seed(seed, probe), {hash_name("sage")});
  auto imp = importance_for(probe, importance_probes, data, ic);
  run.importance = imp.matrix;
  run.importance_diagnostics = imp.diagnostics;

  ScoreInputs in;
  in.R = &run.importance;
  in.curves = &run.curves.front().curves;
  in.factor_names = run.factor_names;
  in.K = data.factor_count();
  in.L = data.code_dim();
  in.verdict_tol = cfg.verdict_tol;
  in.first_rung_linear = lr.ladder.starts_linear();
  run.scores = compute_scores(in);

  for (const auto& sc : run.curves) {
    double total = 0.0;
    for (const auto& c : sc.curves) total += explicitness(c);
    const double E = sc.curves.empty() ? 0.0 : total / static_cast<double>(sc.curves.size());
    run.scores.explicitness_by_scale.emplace_back(to_string(sc.scale), E);
  }
  bool zero_mass = false, degenerate = false, not_converged = false, clamp = false;
  for (const auto& d : run.importance_diagnostics) {
    zero_mass |= d.zero_mass;
    degenerate |= d.degenerate_forest;
    not_converged |= d.not_converged;
    clamp |= d.clamp_warning;
  }
  if (zero_mass) run.scores.flags.push_back("importance_zero_mass");
  if (degenerate) run.scores.flags.push_back("degenerate_forest");
  if (not_converged) run.scores.flags.push_back("sage_not_converged");
  if (clamp) run.scores.flags.push_back("sage_clamped_mass_above_5pct");
  if (std::any_of(run.scores.per_code.begin(), run.scores.per_code.end(), [](const auto& c) { return c.dead; }))
    run.scores.flags.push_back("dead_code_units");
  return run;
}

RunResult run_combination(const ExperimentConfig& cfg, const CodedDataset& data, const std::string& representation,
                          ProbeClass probe, std::uint64_t seed) {
  const CapacityLadder ladder = ladder_for(cfg, probe, data);
  std::vector<Index> factors(static_cast<std::size_t>(data.factor_count()));
  std::iota(factors.begin(), factors.end(), Index{0});
  std::optional<std::size_t> keep_index;
  if (!cfg.importance_capacity.best) keep_index = cfg.importance_capacity.index;
  const KeepProbes keep = cfg.importance_capacity.best ? KeepProbes::best : KeepProbes::none;
  LadderResult lr = train_ladder(data, ladder, factors, cfg.training, run_seed(seed, probe), keep, keep_index);

  std::vector<FittedProbe> chosen;
  for (auto& fl : lr.factors) {
    auto& slot = fl.probes[importance_index(cfg, fl)];
    if (!slot) throw ConfigError("probe for the importance capacity was not kept");
    chosen.push_back(*slot);
  }
  return score_run(cfg, data, representation, probe, seed, lr, chosen);
}

namespace {

Stat stat_of(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

}  // namespace

std::vector<Aggregate> aggregate_runs(const std::vector<RunResult>& runs) {
  std::vector<Aggregate> out;
  std::vector<std::pair<std::string, ProbeClass>> keys;
  for (const auto& r : runs)
    if (std::find(keys.begin(), keys.end(), std::make_pair(r.representation, r.probe)) == keys.end())
      keys.emplace_back(r.representation, r.probe);
  for (const auto& [rep, probe] : keys) {
    Aggregate a;
    a.representation = rep;
    a.probe = probe;
    std::vector<double> D, C, I, E, S;
    for (const auto& r : runs) {
      if (r.representation != rep || r.probe != probe) continue;
      D.push_back(r.scores.D);
      C.push_back(r.scores.C);
      I.push_back(r.scores.I);
      E.push_back(r.scores.E);
      S.push_back(r.scores.S);
      a.verdicts.emplace_back(to_string(r.scores.verdict.verdict));
    }
    a.n_seeds = D.size();
    a.D = stat_of(D);
    a.C = stat_of(C);
    a.I = stat_of(I);
    a.E = stat_of(E);
    a.S = stat_of(S);
    out.push_back(std::move(a));
  }
  return out;
}

DownstreamRecord downstream_performance(const CodedDataset& data, const std::vector<DownstreamTask>& tasks,
                                        ProbeClass probe, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (probe == ProbeClass::rff) throw ConfigError("downstream probes are mlp (linear) or rf");
  DownstreamRecord rec;
  rec.probe = probe;
  rec.seed = seed;
  const auto& train = data.rows(Split::train);
  const auto& val = data.rows(Split::validation);
  const auto& test = data.rows(Split::test);
  if (train.empty() || test.empty()) throw EmptySplit("downstream tasks need train and test rows");
  const Matrix X = data.codes_for(Split::train);
  const Matrix X_val = data.codes_for(Split::validation);
  const Matrix X_test = data.codes_for(Split::test);

  auto gather = [](const Vector& all, const std::vector<Index>& rows) {
    Vector v(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) v(static_cast<Index>(i)) = all(rows[i]);
    return v;
  };
  auto as_targets = [](const Vector& v, TaskKind kind) {
    Targets t;
    t.task = kind;
    if (kind == TaskKind::regression) {
      t.values = v;
    } else {
      t.n_classes = 2;
      for (Index i = 0; i < v.size(); ++i) t.labels.push_back(v(i) > 0.5 ? 1 : 0);
    }
    return t;
  };

  double reg_total = 0.0, cls_total = 0.0;
  int n_reg = 0, n_cls = 0;
  for (const auto& task : tasks) {
    const TaskKind kind = task.kind == DownstreamKind::regression ? TaskKind::regression : TaskKind::classification;
    const Targets y = as_targets(gather(task.labels, train), kind);
    const Targets y_val = as_targets(gather(task.labels, val), kind);
    const Targets y_test = as_targets(gather(task.labels, test), kind);
    const std::uint64_t s = derive_seed(seed, {hash_name("downstream"), static_cast<std::uint64_t>(task.id)});

    Matrix pred;
    if (probe == ProbeClass::mlp) {
      if (kind == TaskKind::regression) pred = fit_least_squares(X, y.values).predict(X_test);
      else pred = train_mlp(X, y, X_val, y_val, {}, cfg.training.mlp, s).predict(X_test);
    } else {
      ForestConfig fc = cfg.training.rf;
      fc.max_depth = cfg.downstream.rf_depth;
      pred = train_forest(X, y, fc, s).predict(X_test);
    }

    double perf = 0.0;
    if (kind == TaskKind::regression) {
      const double mean = y_test.values.mean();
      const double ss_tot = (y_test.values.array() - mean).square().sum();
      const double ss_res = (y_test.values - pred.col(0)).squaredNorm();
      perf = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 0.0;
      reg_total += perf;
      ++n_reg;
    } else {
      Index correct = 0;
      for (Index i = 0; i < pred.rows(); ++i) {
        Index arg = 0;
        pred.row(i).maxCoeff(&arg);
        if (static_cast<int>(arg) == y_test.labels[static_cast<std::size_t>(i)]) ++correct;
      }
      perf = static_cast<double>(correct) / static_cast<double>(pred.rows());
      cls_total += perf;
      ++n_cls;
    }
    rec.per_task.push_back(perf);
  }
  rec.regression = n_reg ? reg_total / n_reg : 0.0;
  rec.classification = n_cls ? cls_total / n_cls : 0.0;
  rec.mean = rec.per_task.empty()
                 ? 0.0
                 : std::accumulate(rec.per_task.begin(), rec.per_task.end(), 0.0) / static_cast<double>(rec.per_task.size());
  return rec;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) throw InsufficientData("correlation needs paired, non-empty samples");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;  // undefined for a constant sample
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) throw InsufficientData("p-value needs at least three pairs");
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

Correlation correlate(const std::vector<double>& scores, const std::vector<double>& performance) {
  if (scores.size() != performance.size()) throw InsufficientData("score and performance counts differ");
  if (scores.size() < 3) throw InsufficientData("correlation needs at least three paired observations");
  Correlation c;
  c.pearson = pearson(scores, performance);
  c.spearman = spearman(scores, performance);
  c.pearson_p = correlation_p_value(c.pearson, scores.size());
  c.spearman_p = correlation_p_value(c.spearman, scores.size());
  return c;
}

CorrelationReport correlate_runs(const std::vector<RunResult>& runs, const std::vector<DownstreamRecord>& downstream,
                                 bool cross_pairing) {
  CorrelationReport rep;
  rep.caveat = kCorrelationCaveat;
  std::vector<ProbeClass> scoring, down;
  for (const auto& r : runs)
    if (std::find(scoring.begin(), scoring.end(), r.probe) == scoring.end()) scoring.push_back(r.probe);
  for (const auto& d : downstream)
    if (std::find(down.begin(), down.end(), d.probe) == down.end()) down.push_back(d.probe);

  for (auto sp : scoring) {
    for (auto dp : down) {
      if (!cross_pairing && sp != dp) continue;
      std::vector<double> D, C, I, E, all, reg, cls;
      for (const auto& r : runs) {
        if (r.probe != sp) continue;
        const auto it = std::find_if(downstream.begin(), downstream.end(), [&](const DownstreamRecord& d) {
          return d.probe == dp && d.representation == r.representation && d.seed == r.seed;
        });
        if (it == downstream.end()) continue;
        D.push_back(r.scores.D);
        C.push_back(r.scores.C);
        I.push_back(r.scores.I);
        E.push_back(r.scores.E);
        all.push_back(it->mean);
        reg.push_back(it->regression);
        cls.push_back(it->classification);
      }
      if (all.size() < 3) continue;
      const std::pair<const char*, const std::vector<double>*> scores[] = {{"D", &D}, {"C", &C}, {"I", &I}, {"E", &E}};
      const std::pair<const char*, const std::vector<double>*> perf[] = {
          {"all", &all}, {"regression", &reg}, {"classification", &cls}};
      for (const auto& [sname, sv] : scores) {
        for (const auto& [pname, pv] : perf) {
          const auto c = correlate(*sv, *pv);
          rep.entries.push_back(CorrelationEntry{sname, to_string(sp), to_string(dp), pname, sv->size(), c.pearson,
                                                 c.pearson_p, c.spearman, c.spearman_p});
        }
      }
    }
  }
  return rep;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;

  struct Combo {
    std::size_t rep;
    std::size_t seed;
    ProbeClass probe;
  };
  std::vector<Combo> combos;
  for (std::size_t r = 0; r < cfg.representations.size(); ++r)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
      for (auto p : cfg.probes) combos.push_back({r, s, p});

  // Datasets are built once per (representation, seed) before the pool starts.
  const std::size_t n_data = cfg.representations.size() * cfg.seeds.size();
  std::vector<std::optional<CodedDataset>> datasets(n_data);
  std::vector<std::string> data_errors(n_data);
  for (std::size_t r = 0; r < cfg.representations.size(); ++r)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      try {
        datasets[r * cfg.seeds.size() + s].emplace(build_dataset(cfg, cfg.representations[r], cfg.seeds[s]));
      } catch (const std::exception& e) {
        data_errors[r * cfg.seeds.size() + s] = e.what();
      }
    }

  std::vector<std::optional<RunResult>> runs(combos.size());
  std::vector<std::string> errors(combos.size());
  const bool outer = static_cast<int>(combos.size()) >= omp_get_max_threads() && omp_get_max_threads() > 1;
#pragma omp parallel for schedule(dynamic) if (outer)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(combos.size()); ++i) {
    const auto& c = combos[static_cast<std::size_t>(i)];
    const std::size_t d = c.rep * cfg.seeds.size() + c.seed;
    if (!datasets[d]) {
      errors[static_cast<std::size_t>(i)] = data_errors[d];
      continue;
    }
    try {
      runs[static_cast<std::size_t>(i)].emplace(
          run_combination(cfg, *datasets[d], cfg.representations[c.rep].name, c.probe, cfg.seeds[c.seed]));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }

  for (std::size_t i = 0; i < combos.size(); ++i) {
    if (runs[i]) {
      result.runs.push_back(std::move(*runs[i]));
    } else {
      const auto& c = combos[i];
      result.failures.push_back(
          RunFailure{cfg.representations[c.rep].name, c.probe, cfg.seeds[c.seed], errors[i]});
    }
  }
  if (result.runs.empty()) {
    std::string msg = "every combination failed";
    if (!result.failures.empty()) msg += "; first error: " + result.failures.front().error;
    throw Error(msg);
  }
  result.aggregates = aggregate_runs(result.runs);

  if (cfg.downstream.enabled) {
    for (std::size_t r = 0; r < cfg.representations.size(); ++r) {
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        const auto& data = datasets[r * cfg.seeds.size() + s];
        if (!data) continue;
        const auto tasks = make_downstream_tasks(*data, cfg.downstream.n_reg, cfg.downstream.n_cls,
                                                 derive_seed(cfg.seeds[s], {hash_name("tasks")}));
        for (auto p : cfg.downstream.probes) {
          auto rec = downstream_performance(*data, tasks, p, cfg, cfg.seeds[s]);
          rec.representation = cfg.representations[r].name;
          result.downstream.push_back(std::move(rec));
        }
      }
    }
    try {
      result.correlations = correlate_runs(result.runs, result.downstream, cfg.downstream.cross_pairing);
    } catch (const InsufficientData&) {
      result.correlations.reset();
    }
  }
  return result;
}

}  // namespace dcies

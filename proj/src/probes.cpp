#include "dcies/probes.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <mutex>

#include "dcies/rng.hpp"

namespace dcies {

using nlohmann::json;

const char* to_string(ProbeClass p) {
  switch (p) {
    case ProbeClass::mlp: return "mlp";
    case ProbeClass::rff: return "rff";
    case ProbeClass::rf: return "rf";
  }
  return "?";
}

ProbeClass parse_probe_class(const std::string& s) {
  if (s == "mlp") return ProbeClass::mlp;
  if (s == "rff") return ProbeClass::rff;
  if (s == "rf") return ProbeClass::rf;
  throw ConfigError("unknown probe class '" + s + "'");
}

const char* to_string(CapacityScale s) {
  switch (s) {
    case CapacityScale::natural: return "natural";
    case CapacityScale::log: return "log";
    case CapacityScale::linear: return "linear";
  }
  return "?";
}

CapacityScale parse_capacity_scale(const std::string& s) {
  if (s == "natural" || s == "default") return CapacityScale::natural;
  if (s == "log") return CapacityScale::log;
  if (s == "linear") return CapacityScale::linear;
  throw ConfigError("unknown capacity scale '" + s + "'");
}

std::vector<double> CapacityLadder::capacities() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.capacity);
  return out;
}

double capacity_value(ProbeClass probe_class, const LadderEntry& entry, Index code_dim, Index outputs,
                      CapacityScale scale) {
  switch (probe_class) {
    case ProbeClass::mlp: {
      const long long linear = mlp_parameter_count(code_dim, {}, outputs);
      const long long params = entry.hidden_width == 0
                                   ? linear
                                   : mlp_parameter_count(code_dim, {entry.hidden_width, entry.hidden_width}, outputs);
      const auto excess = static_cast<double>(params - linear);
      return scale == CapacityScale::linear ? excess : std::log10(1.0 + excess);
    }
    case ProbeClass::rff: {
      const auto d = static_cast<double>(entry.n_features);
      return scale == CapacityScale::linear ? d : std::log2(d);
    }
    case ProbeClass::rf: {
      const auto depth = static_cast<double>(entry.max_depth);
      return scale == CapacityScale::log ? std::log2(depth) : depth;
    }
  }
  return 0.0;
}

CapacityLadder build_ladder(ProbeClass probe_class, LadderDims dims, const LadderConfig& cfg) {
  if (dims.code_dim < 1 || dims.factor_count < 1) throw ConfigError("ladder needs L, K >= 1");
  CapacityLadder ladder{probe_class, cfg.scale, {}};
  switch (probe_class) {
    case ProbeClass::mlp:
      if (cfg.mlp_include_linear) ladder.entries.push_back(LadderEntry{});
      for (std::size_t i = 0; i < cfg.mlp_width_multipliers.size(); ++i) {
        const int m = cfg.mlp_width_multipliers[i];
        if (m < 1 || (i > 0 && m <= cfg.mlp_width_multipliers[i - 1]))
          throw ConfigError("mlp width multipliers must be positive and strictly increasing");
        LadderEntry e;
        e.hidden_width = m * static_cast<int>(dims.factor_count);
        ladder.entries.push_back(e);
      }
      break;
    case ProbeClass::rf:
      for (std::size_t i = 0; i < cfg.rf_depths.size(); ++i) {
        const int d = cfg.rf_depths[i];
        if (d < 1 || (i > 0 && d <= cfg.rf_depths[i - 1]))
          throw ConfigError("rf depths must be positive and strictly increasing");
        LadderEntry e;
        e.max_depth = d;
        ladder.entries.push_back(e);
      }
      break;
    case ProbeClass::rff:
      if (cfg.rff_stride < 1 || cfg.rff_min_log2 < 0 || cfg.rff_max_log2 < cfg.rff_min_log2 || cfg.rff_max_log2 > 40)
        throw ConfigError("invalid random-feature exponent range");
      for (int p = cfg.rff_min_log2; p <= cfg.rff_max_log2; p += cfg.rff_stride) {
        LadderEntry e;
        e.n_features = 1LL << p;
        ladder.entries.push_back(e);
      }
      break;
  }
  if (ladder.entries.size() < 2) throw ConfigError("a capacity ladder needs at least two rungs");
  for (auto& e : ladder.entries) e.capacity = capacity_value(probe_class, e, dims.code_dim, 1, cfg.scale);
  for (std::size_t i = 1; i < ladder.entries.size(); ++i)
    if (!(ladder.entries[i].capacity > ladder.entries[i - 1].capacity))
      throw ConfigError("ladder capacities must be strictly increasing");
  return ladder;
}

FittedProbe::FittedProbe(ProbeClass probe_class, std::size_t ladder_index, LadderEntry entry, Index factor,
                         TaskKind task, int n_classes, std::shared_ptr<const ProbeModel> model,
                         TrainingDiagnostics diagnostics)
    : probe_class_(probe_class),
      ladder_index_(ladder_index),
      entry_(entry),
      factor_(factor),
      task_(task),
      n_classes_(n_classes),
      model_(std::move(model)),
      diagnostics_(std::move(diagnostics)) {
  if (!model_) throw ConfigError("fitted probe without a model");
}

double baseline_loss(const CodedDataset& data, Index factor, Split split) {
  const auto& spec = data.factor_spec(factor);
  if (spec.is_categorical()) return std::log(static_cast<double>(spec.classes()));
  const auto& train = data.rows(Split::train);
  if (train.empty()) throw EmptySplit("baseline needs a non-empty train split");
  const double mean = data.factor_for(factor, Split::train).mean();
  const Vector target = data.factor_for(factor, split);
  if (target.size() == 0) throw EmptySplit(std::string("baseline on empty split ") + to_string(split));
  return (target.array() - mean).square().mean();
}

FittedProbe fit_probe(const CodedDataset& data, Index factor, ProbeClass probe_class, std::size_t ladder_index,
                      const LadderEntry& entry, const TrainingConfig& cfg, std::uint64_t seed) {
  if (factor < 0 || factor >= data.factor_count()) throw SchemaMismatch("factor index out of range");
  if (data.rows(Split::train).empty()) throw EmptySplit("probe fitting needs a non-empty train split");
  const Matrix X = data.codes_for(Split::train);
  const Matrix X_val = data.codes_for(Split::validation);
  const Targets y = targets_for(data, factor, Split::train);
  const Targets y_val = targets_for(data, factor, Split::validation);

  TrainingDiagnostics diag;
  std::shared_ptr<const ProbeModel> model;
  switch (probe_class) {
    case ProbeClass::mlp:
      if (entry.hidden_width == 0 && y.task == TaskKind::regression) {
        auto lin = fit_least_squares(X, y.values);
        if (!lin.weights().allFinite()) throw TrainingDiverged("least squares produced non-finite weights");
        diag.train_loss = task_loss(lin.predict(X), y);
        if (X_val.rows() > 0) diag.validation_loss = task_loss(lin.predict(X_val), y_val);
        model = std::make_shared<LinearModel>(std::move(lin));
      } else if (entry.hidden_width == 0) {
        const MlpModel net = train_mlp(X, y, X_val, y_val, {}, cfg.mlp, seed, &diag);
        model = std::make_shared<LinearModel>(net.layers().front().weights, net.layers().front().bias,
                                              TaskKind::classification);
      } else {
        model = std::make_shared<MlpModel>(
            train_mlp(X, y, X_val, y_val, {entry.hidden_width, entry.hidden_width}, cfg.mlp, seed, &diag));
      }
      break;
    case ProbeClass::rf: {
      ForestConfig fc = cfg.rf;
      fc.max_depth = entry.max_depth;
      auto forest = train_forest(X, y, fc, seed);
      diag.train_loss = task_loss(forest.predict(X), y);
      model = std::make_shared<ForestModel>(std::move(forest));
      break;
    }
    case ProbeClass::rff:
      model = std::make_shared<RffModel>(train_rff(X, y, X_val, y_val, entry.n_features, cfg.rff, seed, &diag));
      break;
  }
  if (!std::isfinite(diag.train_loss)) throw TrainingDiverged("training loss is non-finite");
  return FittedProbe(probe_class, ladder_index, entry, factor, y.task, y.n_classes, std::move(model), diag);
}

ProbeLoss evaluate_probe(const FittedProbe& probe, const CodedDataset& data, Split split) {
  const Index j = probe.factor();
  if (probe.input_dim() != data.code_dim() || j < 0 || j >= data.factor_count())
    throw SchemaMismatch("probe does not match the dataset schema");
  const auto& spec = data.factor_spec(j);
  const bool categorical = spec.is_categorical();
  if (categorical != (probe.task() == TaskKind::classification) ||
      (categorical && probe.n_classes() != spec.classes()))
    throw SchemaMismatch("probe task does not match factor kind");
  const Targets y = targets_for(data, j, split);
  if (y.size() == 0) throw EmptySplit(std::string("cannot evaluate on empty split ") + to_string(split));
  const double raw = task_loss(probe.predict(data.codes_for(split)), y);
  return ProbeLoss{j, probe.ladder_index(), raw, normalized_loss(raw, baseline_loss(data, j, split))};
}

std::uint64_t probe_seed(std::uint64_t experiment_seed, Index factor, std::size_t capacity_index) {
  return derive_seed(experiment_seed, {static_cast<std::uint64_t>(factor), static_cast<std::uint64_t>(capacity_index)});
}

LadderResult train_ladder(const CodedDataset& data, const CapacityLadder& ladder, const std::vector<Index>& factors,
                          const TrainingConfig& cfg, std::uint64_t seed, KeepProbes keep,
                          std::optional<std::size_t> keep_index) {
  const std::size_t T = ladder.size();
  if (T < 2) throw ConfigError("a capacity ladder needs at least two rungs");
  LadderResult result{ladder, {}};
  for (Index j : factors) {
    if (j < 0 || j >= data.factor_count()) throw SchemaMismatch("factor index out of range");
    FactorLadder fl;
    fl.factor = j;
    fl.losses.resize(T);
    fl.probes.resize(T);
    fl.seeds.resize(T);
    const auto& spec = data.factor_spec(j);
    const Index outputs = spec.is_categorical() ? spec.classes() : 1;
    for (const auto& e : ladder.entries)
      fl.capacities.push_back(capacity_value(ladder.probe_class, e, data.code_dim(), outputs, ladder.scale));
    result.factors.push_back(std::move(fl));
  }

  const std::size_t F = factors.size();
  const auto tasks = static_cast<std::ptrdiff_t>(F * T);
  std::vector<std::string> errors(static_cast<std::size_t>(tasks));
  std::vector<double> running_best(F, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> running_index(F, T);
  std::mutex guard;

  // Nested kernels run serially inside the task pool.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    const std::size_t f = static_cast<std::size_t>(task) / T;
    const std::size_t t = static_cast<std::size_t>(task) % T;
    auto& fl = result.factors[f];
    try {
      const std::uint64_t s = probe_seed(seed, fl.factor, t);
      FittedProbe probe = fit_probe(data, fl.factor, ladder.probe_class, t, ladder.entries[t], cfg, s);
      const ProbeLoss loss = evaluate_probe(probe, data, Split::test);
      std::lock_guard lock(guard);
      fl.losses[t] = loss;
      fl.seeds[t] = s;
      const bool better = loss.normalized < running_best[f] ||
                          (loss.normalized == running_best[f] && t < running_index[f]);
      if (better) {
        if (running_index[f] < T && keep == KeepProbes::best && running_index[f] != keep_index)
          fl.probes[running_index[f]].reset();
        running_best[f] = loss.normalized;
        running_index[f] = t;
      }
      if (keep == KeepProbes::all || (keep == KeepProbes::best && better) || (keep_index && *keep_index == t))
        fl.probes[t].emplace(std::move(probe));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(task)] = e.what();
    }
  }
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    if (!errors[static_cast<std::size_t>(task)].empty()) {
      const std::size_t f = static_cast<std::size_t>(task) / T;
      throw ProbeFitError(static_cast<std::size_t>(result.factors[f].factor), static_cast<std::size_t>(task) % T,
                          errors[static_cast<std::size_t>(task)]);
    }
  }
  for (std::size_t f = 0; f < F; ++f) {
    auto& fl = result.factors[f];
    fl.best_index = 0;
    fl.best_loss = fl.losses[0].normalized;
    for (std::size_t t = 1; t < T; ++t) {
      if (fl.losses[t].normalized < fl.best_loss) {
        fl.best_loss = fl.losses[t].normalized;
        fl.best_index = t;
      }
    }
  }
  return result;
}

void save_probe(const std::filesystem::path& path, const FittedProbe& probe, std::uint64_t seed) {
  const auto& e = probe.entry();
  json doc{{"schema_version", kCheckpointSchemaVersion},
           {"format", "dcies-probe"},
           {"probe_class", to_string(probe.probe_class())},
           {"factor", probe.factor()},
           {"ladder_index", probe.ladder_index()},
           {"capacity", e.capacity},
           {"hidden_width", e.hidden_width},
           {"max_depth", e.max_depth},
           {"n_features", e.n_features},
           {"seed", seed},
           {"task", probe.task() == TaskKind::regression ? "regression" : "classification"},
           {"n_classes", probe.n_classes()},
           {"diagnostics",
            {{"train_loss", probe.diagnostics().train_loss},
             {"validation_loss", probe.diagnostics().validation_loss},
             {"epochs", probe.diagnostics().epochs},
             {"best_epoch", probe.diagnostics().best_epoch},
             {"selected", probe.diagnostics().selected}}},
           {"model", probe.model().to_json()}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const auto bytes = json::to_cbor(doc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

FittedProbe load_probe(const std::filesystem::path& path, std::uint64_t* seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json doc;
  try {
    doc = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw SchemaMismatch("checkpoint " + path.string() + " is not valid CBOR: " + e.what());
  }
  if (doc.value("format", "") != "dcies-probe" || doc.value("schema_version", 0) != kCheckpointSchemaVersion)
    throw SchemaMismatch("unsupported checkpoint schema in " + path.string());
  LadderEntry e;
  e.capacity = doc.at("capacity").get<double>();
  e.hidden_width = doc.at("hidden_width").get<int>();
  e.max_depth = doc.at("max_depth").get<int>();
  e.n_features = doc.at("n_features").get<long long>();
  TrainingDiagnostics diag;
  const auto& d = doc.at("diagnostics");
  diag.train_loss = d.at("train_loss").get<double>();
  diag.validation_loss = d.at("validation_loss").get<double>();
  diag.epochs = d.at("epochs").get<int>();
  diag.best_epoch = d.at("best_epoch").get<int>();
  diag.selected = d.at("selected").get<std::string>();
  if (seed) *seed = doc.at("seed").get<std::uint64_t>();
  const TaskKind task =
      doc.at("task").get<std::string>() == "regression" ? TaskKind::regression : TaskKind::classification;
  return FittedProbe(parse_probe_class(doc.at("probe_class").get<std::string>()),
                     doc.at("ladder_index").get<std::size_t>(), e, doc.at("factor").get<Index>(), task,
                     doc.at("n_classes").get<int>(), model_from_json(doc.at("model")), diag);
}

}  // namespace dcies

#include "dcies/config.hpp"

#include <toml.hpp>

#include <set>
#include <sstream>

namespace dcies {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

template <class T>
T get_or(const toml::table& t, const std::string& key, T fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value<bool>()) return *v;
    bad(key, "expected a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) return *v;
    bad(key, "expected a string");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) return static_cast<T>(*v);
    bad(key, "expected a number");
  } else {
    if (!node->is_integer()) bad(key, "expected an integer");
    return static_cast<T>(*node->value<std::int64_t>());
  }
}

template <class T>
std::vector<T> list_or(const toml::table& t, const std::string& key, std::vector<T> fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  const auto* arr = node->as_array();
  if (!arr) bad(key, "expected an array");
  std::vector<T> out;
  for (const auto& e : *arr) {
    if constexpr (std::is_same_v<T, std::string>) {
      auto v = e.value<std::string>();
      if (!v) bad(key, "expected strings");
      out.push_back(*v);
    } else if constexpr (std::is_floating_point_v<T>) {
      auto v = e.value<double>();
      if (!v) bad(key, "expected numbers");
      out.push_back(static_cast<T>(*v));
    } else {
      if (!e.is_integer()) bad(key, "expected integers");
      out.push_back(static_cast<T>(*e.value<std::int64_t>()));
    }
  }
  return out;
}

const toml::table* sub(const toml::table& t, const std::string& key) {
  const auto* node = t.get(key);
  if (!node) return nullptr;
  const auto* tbl = node->as_table();
  if (!tbl) bad(key, "expected a table");
  return tbl;
}

MaxFeatures parse_max_features(const std::string& s) {
  if (s == "all") return MaxFeatures::all;
  if (s == "sqrt") return MaxFeatures::sqrt;
  if (s == "third") return MaxFeatures::third;
  throw ConfigError("unknown max_features '" + s + "' (all, sqrt, third)");
}

const char* max_features_name(MaxFeatures m) {
  switch (m) {
    case MaxFeatures::all: return "all";
    case MaxFeatures::sqrt: return "sqrt";
    case MaxFeatures::third: return "third";
  }
  return "all";
}

AdamConfig parse_adam(const toml::table& t, AdamConfig a) {
  a.epochs = get_or(t, "epochs", a.epochs);
  a.batch_size = get_or(t, "batch_size", a.batch_size);
  a.learning_rate = get_or(t, "learning_rate", a.learning_rate);
  a.beta1 = get_or(t, "beta1", a.beta1);
  a.beta2 = get_or(t, "beta2", a.beta2);
  a.epsilon = get_or(t, "epsilon", a.epsilon);
  if (a.epochs < 1 || a.batch_size < 1 || !(a.learning_rate > 0.0)) throw ConfigError("invalid optimizer settings");
  return a;
}

std::vector<FactorSpec> continuous_factors(std::vector<FactorSpec> specs, int n) {
  for (int k = 0; k < n; ++k) specs.push_back(FactorSpec::continuous("z" + std::to_string(specs.size())));
  return specs;
}

std::vector<FactorSpec> parse_factors(const toml::table& data) {
  const int n_continuous = get_or(data, "continuous_factors", 0);
  if (n_continuous < 0) bad("data.continuous_factors", "must be >= 0");
  const auto* node = data.get("factors");
  // Without a factor list, continuous_factors alone defines the factors.
  if (!node) return n_continuous > 0 ? continuous_factors({}, n_continuous) : mpi3d_like_factors();
  if (auto preset = node->value<std::string>()) {
    if (*preset != "mpi3d") bad("data.factors", "unknown preset '" + *preset + "'");
    return continuous_factors(mpi3d_like_factors(), n_continuous);
  }
  const auto* arr = node->as_array();
  if (!arr) bad("data.factors", "expected an array of tables or a preset name");
  std::vector<FactorSpec> specs;
  for (const auto& e : *arr) {
    const auto* t = e.as_table();
    if (!t) bad("data.factors", "expected tables {name, kind, cardinality}");
    const auto name = get_or<std::string>(*t, "name", "z" + std::to_string(specs.size()));
    const auto kind = get_or<std::string>(*t, "kind", "continuous");
    if (kind == "continuous") {
      specs.push_back(FactorSpec::continuous(name));
    } else if (kind == "categorical") {
      specs.push_back(FactorSpec::categorical(name, get_or(*t, "cardinality", 0)));
    } else {
      bad("data.factors", "unknown kind '" + kind + "'");
    }
    specs.back().validate();
  }
  return continuous_factors(std::move(specs), n_continuous);
}

MonotoneMap parse_map(const toml::table& t) {
  MonotoneMap m;
  const auto fam = get_or<std::string>(t, "family", "cubic");
  if (fam == "cubic") m.family = MonotoneMap::Family::cubic;
  else if (fam == "sinh") m.family = MonotoneMap::Family::sinh;
  else if (fam == "exp") m.family = MonotoneMap::Family::exp;
  else bad("maps.family", "unknown family '" + fam + "'");
  m.a = get_or(t, "a", 1.0);
  return m;
}

RepresentationSource parse_representation(const toml::table& t, const fs::path& base_dir, std::size_t index) {
  RepresentationSource rep;
  rep.name = get_or<std::string>(t, "name", "representation" + std::to_string(index));
  const bool has_files = t.contains("codes");
  if (has_files) {
    auto resolve = [&](const std::string& key) -> fs::path {
      const auto s = get_or<std::string>(t, key, "");
      if (s.empty()) bad(rep.name + "." + key, "missing");
      fs::path p(s);
      return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    io::DatasetFiles f{resolve("codes"), resolve("factors"), resolve("factor_spec"), std::nullopt};
    if (t.contains("split")) f.split = resolve("split");
    rep.files = f;
    return rep;
  }
  MixingSpec m;
  m.kind = parse_mixing_kind(get_or<std::string>(t, "mixing", rep.name));
  m.noise_std = get_or(t, "noise_std", m.kind == MixingKind::noisy ? 0.1 : 0.0);
  m.seed = get_or<std::uint64_t>(t, "mixing_seed", 0);
  m.code_dim = get_or(t, "code_dim", 0);
  m.depth = get_or(t, "depth", m.depth);
  m.gain = get_or(t, "gain", m.gain);
  if (const auto* maps = t.get("maps")) {
    const auto* arr = maps->as_array();
    if (!arr) bad(rep.name + ".maps", "expected an array of tables");
    for (const auto& e : *arr) {
      if (!e.as_table()) bad(rep.name + ".maps", "expected tables {family, a}");
      m.maps.push_back(parse_map(*e.as_table()));
    }
  }
  m.permutation = list_or<int>(t, "permutation", {});
  m.validate();
  rep.mixing = m;
  return rep;
}

}  // namespace

std::vector<FactorSpec> mpi3d_like_factors() {
  return {FactorSpec::categorical("object_color", 6), FactorSpec::categorical("object_shape", 6),
          FactorSpec::categorical("object_size", 2),  FactorSpec::categorical("camera_height", 3),
          FactorSpec::categorical("background", 3),   FactorSpec::categorical("horizontal_axis", 40),
          FactorSpec::categorical("vertical_axis", 40)};
}

void ExperimentConfig::validate() const {
  if (representations.empty()) throw ConfigError("config lists no representations");
  if (probes.empty()) throw ConfigError("config lists no probe classes");
  if (seeds.empty()) throw ConfigError("config lists no seeds");
  if (capacity_scales.empty()) throw ConfigError("config lists no capacity scales");
  if (!(verdict_tol >= 0.0 && verdict_tol < 1.0)) throw ConfigError("verdict_tol must be in [0, 1)");
  if (!(loss_floor >= 0.0 && loss_floor < 1.0)) throw ConfigError("loss_floor must be in [0, 1)");
  std::set<std::string> names;
  for (const auto& r : representations) {
    if (!names.insert(r.name).second) throw ConfigError("duplicate representation name '" + r.name + "'");
    if (r.files) {
      for (const auto& p : {r.files->codes, r.files->factors, r.files->factor_spec})
        if (!fs::exists(p)) throw ConfigError("representation '" + r.name + "': file not found: " + p.string());
      if (r.files->split && !fs::exists(*r.files->split))
        throw ConfigError("representation '" + r.name + "': file not found: " + r.files->split->string());
    } else if (!r.mixing) {
      throw ConfigError("representation '" + r.name + "' has neither a mixing nor files");
    }
  }
  if (synthetic.factor_specs.empty()) throw ConfigError("synthetic data needs at least one factor");
  importance.sage.validate();
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }

  ExperimentConfig cfg;
  std::vector<std::string> probe_names;
  for (auto p : cfg.probes) probe_names.emplace_back(to_string(p));
  cfg.probes.clear();
  for (const auto& s : list_or<std::string>(root, "probes", probe_names)) cfg.probes.push_back(parse_probe_class(s));

  cfg.seeds = list_or<std::uint64_t>(root, "seeds", cfg.seeds);
  cfg.capacity_scales.clear();
  for (const auto& s : list_or<std::string>(root, "capacity_scales", {"natural"}))
    cfg.capacity_scales.push_back(parse_capacity_scale(s));
  cfg.loss_floor = get_or(root, "loss_floor", cfg.loss_floor);
  cfg.verdict_tol = get_or(root, "verdict_tol", cfg.verdict_tol);
  {
    const auto s = get_or<std::string>(root, "output_dir", cfg.output_dir.string());
    fs::path p(s);
    cfg.output_dir = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  if (const auto* node = root.get("importance_capacity")) {
    if (auto s = node->value<std::string>()) {
      if (*s != "best") bad("importance_capacity", "expected \"best\" or a ladder index");
    } else if (node->is_integer()) {
      const auto v = *node->value<std::int64_t>();
      if (v < 0) bad("importance_capacity", "index must be >= 0");
      cfg.importance_capacity = {false, static_cast<std::size_t>(v)};
    } else {
      bad("importance_capacity", "expected \"best\" or a ladder index");
    }
  }

  cfg.synthetic.factor_specs = mpi3d_like_factors();
  if (const auto* data = sub(root, "data")) {
    cfg.synthetic.factor_specs = parse_factors(*data);
    cfg.synthetic.n_samples = get_or<Index>(*data, "n_samples", cfg.synthetic.n_samples);
    cfg.synthetic.grid_size = get_or(*data, "grid_size", cfg.synthetic.grid_size);
    cfg.synthetic.train_fraction = get_or(*data, "train_fraction", cfg.synthetic.train_fraction);
    cfg.synthetic.validation_fraction = get_or(*data, "validation_fraction", cfg.synthetic.validation_fraction);
  }

  if (const auto* node = root.get("representation")) {
    const auto* arr = node->as_array();
    if (!arr) bad("representation", "expected [[representation]] tables");
    for (const auto& e : *arr) {
      if (!e.as_table()) bad("representation", "expected [[representation]] tables");
      cfg.representations.push_back(parse_representation(*e.as_table(), base_dir, cfg.representations.size()));
    }
  }

  if (const auto* ladder = sub(root, "ladder")) {
    auto& L = cfg.ladder;
    if (const auto* m = sub(*ladder, "mlp")) {
      L.mlp_width_multipliers = list_or<int>(*m, "width_multipliers", L.mlp_width_multipliers);
      L.mlp_include_linear = get_or(*m, "include_linear", L.mlp_include_linear);
    }
    if (const auto* r = sub(*ladder, "rf")) L.rf_depths = list_or<int>(*r, "depths", L.rf_depths);
    if (const auto* r = sub(*ladder, "rff")) {
      L.rff_min_log2 = get_or(*r, "min_log2", L.rff_min_log2);
      L.rff_max_log2 = get_or(*r, "max_log2", L.rff_max_log2);
      L.rff_stride = get_or(*r, "stride", L.rff_stride);
    }
  }

  if (const auto* tr = sub(root, "training")) {
    auto& T = cfg.training;
    if (const auto* m = sub(*tr, "mlp")) T.mlp = parse_adam(*m, T.mlp);
    if (const auto* r = sub(*tr, "rf")) {
      T.rf.n_trees = get_or(*r, "n_trees", T.rf.n_trees);
      T.rf.bootstrap = get_or(*r, "bootstrap", T.rf.bootstrap);
      T.rf.min_samples_split = get_or(*r, "min_samples_split", T.rf.min_samples_split);
      T.rf.regression_features =
          parse_max_features(get_or<std::string>(*r, "regression_max_features", max_features_name(T.rf.regression_features)));
      T.rf.classification_features = parse_max_features(
          get_or<std::string>(*r, "classification_max_features", max_features_name(T.rf.classification_features)));
      if (T.rf.n_trees < 1) bad("training.rf.n_trees", "must be >= 1");
    }
    if (const auto* r = sub(*tr, "rff")) {
      T.rff.bandwidth_multipliers = list_or<double>(*r, "bandwidth_multipliers", T.rff.bandwidth_multipliers);
      T.rff.ridge_grid = list_or<double>(*r, "ridge_grid", T.rff.ridge_grid);
      T.rff.median_subsample = get_or(*r, "median_subsample", T.rff.median_subsample);
      if (const auto* h = sub(*r, "head")) T.rff.head = parse_adam(*h, T.rff.head);
    }
  }

  if (const auto* s = sub(root, "sage")) {
    auto& S = cfg.importance.sage;
    S.n_permutations = get_or(*s, "n_permutations", S.n_permutations);
    S.marginal_sample_size = get_or(*s, "marginal_sample_size", S.marginal_sample_size);
    S.convergence_tol = get_or(*s, "convergence_tol", S.convergence_tol);
    S.max_evals = get_or(*s, "max_evals", S.max_evals);
    S.window = get_or(*s, "window", S.window);
    cfg.importance.coefficients_for_linear = get_or(*s, "coefficients_for_linear", false);
  }

  if (const auto* d = sub(root, "downstream")) {
    auto& D = cfg.downstream;
    D.enabled = get_or(*d, "enabled", true);
    std::vector<std::string> names;
    for (auto p : D.probes) names.emplace_back(to_string(p));
    D.probes.clear();
    for (const auto& s : list_or<std::string>(*d, "probes", names)) {
      const auto p = parse_probe_class(s);
      if (p == ProbeClass::rff) bad("downstream.probes", "low-capacity probes are mlp (linear) or rf");
      D.probes.push_back(p);
    }
    D.n_reg = get_or(*d, "n_reg", D.n_reg);
    D.n_cls = get_or(*d, "n_cls", D.n_cls);
    D.rf_depth = get_or(*d, "rf_depth", D.rf_depth);
    D.cross_pairing = get_or(*d, "cross_pairing", D.cross_pairing);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config(io::read_text(path), path.parent_path());
}

}  // namespace dcies

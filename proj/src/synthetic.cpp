#include "dcies/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcies/kernels.hpp"
#include "dcies/rng.hpp"

namespace dcies {

const char* to_string(MixingKind k) {
  switch (k) {
    case MixingKind::identity: return "identity";
    case MixingKind::noisy: return "noisy";
    case MixingKind::linear_uniform: return "linear_uniform";
    case MixingKind::signed_permutation: return "signed_permutation";
    case MixingKind::elementwise_monotone: return "elementwise_monotone";
    case MixingKind::random_linear: return "random_linear";
    case MixingKind::random_mlp: return "random_mlp";
  }
  return "?";
}

MixingKind parse_mixing_kind(const std::string& s) {
  for (auto k : {MixingKind::identity, MixingKind::noisy, MixingKind::linear_uniform, MixingKind::signed_permutation,
                 MixingKind::elementwise_monotone, MixingKind::random_linear, MixingKind::random_mlp})
    if (s == to_string(k)) return k;
  if (s == "gt") return MixingKind::identity;
  throw ConfigError("unknown mixing kind '" + s + "'");
}

double MonotoneMap::operator()(double x) const {
  switch (family) {
    case Family::cubic: return x + a * x * x * x;
    case Family::sinh: return std::sinh(a * x) / a;
    case Family::exp: return std::exp(a * x) / a;
  }
  return x;
}

void MixingSpec::validate() const {
  if (noise_std < 0) throw ConfigError("noise_std must be non-negative");
  if (kind != MixingKind::noisy && noise_std != 0.0) throw ConfigError("noise_std is only valid for noisy mixing");
  if (code_dim < 0) throw ConfigError("code_dim must be non-negative");
  if (code_dim != 0 && kind != MixingKind::random_linear && kind != MixingKind::random_mlp &&
      kind != MixingKind::linear_uniform)
    throw ConfigError(std::string("code_dim cannot be changed for ") + to_string(kind));
  if (kind == MixingKind::random_mlp && depth < 1) throw ConfigError("random_mlp depth must be >= 1");
  for (const auto& m : maps)
    if (!(m.a > 0)) throw ConfigError("monotone maps need a > 0");
}

Matrix generate_factors(const std::vector<FactorSpec>& specs, Index n_samples, std::uint64_t seed, int grid_size) {
  if (n_samples < 1) throw ConfigError("need at least one sample");
  if (grid_size < 2) throw ConfigError("continuous grid needs at least two points");
  const auto K = static_cast<Index>(specs.size());
  Matrix Z(n_samples, K);
  for (Index j = 0; j < K; ++j) {
    const auto& spec = specs[static_cast<std::size_t>(j)];
    spec.validate();
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j)}));
    const int levels = spec.is_categorical() ? spec.classes() : grid_size;
    std::uniform_int_distribution<int> pick(0, levels - 1);
    for (Index i = 0; i < n_samples; ++i) Z(i, j) = pick(rng);
    if (!spec.is_categorical()) {
      const auto st = kernels::column_stats_serial(Z.col(j)).front();
      if (st.std > 0) Z.col(j).array() = (Z.col(j).array() - st.mean) / st.std;
    }
  }
  return Z;
}

Matrix mixing_input(const Matrix& factors) {
  Matrix out = factors;
  const auto stats = kernels::column_stats(factors);
  for (Index j = 0; j < out.cols(); ++j) {
    const auto st = stats[static_cast<std::size_t>(j)];
    out.col(j).array() -= st.mean;
    if (st.std > 0) out.col(j) /= st.std;
  }
  return out;
}

namespace {

double condition_number(const Matrix& W) {
  Eigen::JacobiSVD<Matrix> svd(W);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  return smallest > 0 ? s(0) / smallest : std::numeric_limits<double>::infinity();
}

std::vector<int> random_permutation(Index n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

template <typename Sampler>
Matrix sample_linear(Sampler&& sample, const char* what) {
  Matrix W = sample();
  if (condition_number(W) > 1e8) {
    W = sample();
    if (condition_number(W) > 1e8) throw SingularMixing(std::string(what) + " stayed ill-conditioned after a resample");
  }
  return W;
}

}  // namespace

MixedCodes mix(const Matrix& Z, const MixingSpec& spec) {
  spec.validate();
  const Index n = Z.rows();
  const Index K = Z.cols();
  const Index L = spec.code_dim > 0 ? spec.code_dim : K;
  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MixedCodes out;

  auto permutation = [&]() {
    if (!spec.permutation.empty()) {
      if (static_cast<Index>(spec.permutation.size()) != K) throw ConfigError("permutation must have K entries");
      auto sorted = spec.permutation;
      std::sort(sorted.begin(), sorted.end());
      for (Index i = 0; i < K; ++i)
        if (sorted[static_cast<std::size_t>(i)] != i) throw ConfigError("permutation is not a bijection");
      return spec.permutation;
    }
    return random_permutation(K, rng);
  };

  switch (spec.kind) {
    case MixingKind::identity:
      out.codes = Z;
      out.weights = Matrix::Identity(K, K);
      break;
    case MixingKind::noisy:
      out.codes = Z;
      for (Index j = 0; j < K; ++j)
        for (Index i = 0; i < n; ++i) out.codes(i, j) += spec.noise_std * gauss(rng);
      out.weights = Matrix::Identity(K, K);
      break;
    case MixingKind::linear_uniform: {
      const double mean = 1.0 / static_cast<double>(L * K);
      const double sd = std::sqrt(0.001);
      out.weights = sample_linear(
          [&] {
            Matrix W(L, K);
            for (Index c = 0; c < K; ++c)
              for (Index r = 0; r < L; ++r) W(r, c) = mean + sd * gauss(rng);
            return W;
          },
          "uniform mixing matrix");
      out.codes = Z * out.weights.transpose();
      break;
    }
    case MixingKind::random_linear: {
      const double sd = 1.0 / std::sqrt(static_cast<double>(K));
      out.weights = sample_linear(
          [&] {
            Matrix W(L, K);
            for (Index c = 0; c < K; ++c)
              for (Index r = 0; r < L; ++r) W(r, c) = sd * gauss(rng);
            return W;
          },
          "random mixing matrix");
      out.codes = Z * out.weights.transpose();
      break;
    }
    case MixingKind::signed_permutation: {
      out.permutation = permutation();
      std::bernoulli_distribution coin(0.5);
      out.weights = Matrix::Zero(K, K);
      out.codes.resize(n, K);
      for (Index j = 0; j < K; ++j) {
        const int s = coin(rng) ? 1 : -1;
        out.signs.push_back(s);
        out.weights(j, out.permutation[static_cast<std::size_t>(j)]) = s;
        out.codes.col(j) = s * Z.col(out.permutation[static_cast<std::size_t>(j)]);
      }
      break;
    }
    case MixingKind::elementwise_monotone: {
      out.permutation = permutation();
      out.maps = spec.maps;
      if (out.maps.empty()) {
        std::uniform_int_distribution<int> family(0, 2);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (Index j = 0; j < K; ++j) {
          MonotoneMap m;
          switch (family(rng)) {
            case 0: m = {MonotoneMap::Family::cubic, 0.5 + 1.5 * unit(rng)}; break;
            case 1: m = {MonotoneMap::Family::sinh, 1.0 + unit(rng)}; break;
            default: m = {MonotoneMap::Family::exp, 0.5 + unit(rng)}; break;
          }
          out.maps.push_back(m);
        }
      }
      if (static_cast<Index>(out.maps.size()) != K) throw ConfigError("monotone mixing needs K maps");
      out.codes.resize(n, K);
      for (Index j = 0; j < K; ++j) {
        const auto& h = out.maps[static_cast<std::size_t>(j)];
        const Index src = out.permutation[static_cast<std::size_t>(j)];
        for (Index i = 0; i < n; ++i) out.codes(i, j) = h(Z(i, src));
      }
      break;
    }
    case MixingKind::random_mlp: {
      Matrix h = Z;
      for (int layer = 0; layer < spec.depth; ++layer) {
        const Index fan_in = h.cols();
        const double sd = spec.gain / std::sqrt(static_cast<double>(fan_in));
        Matrix W(fan_in, L);
        for (Index c = 0; c < L; ++c)
          for (Index r = 0; r < fan_in; ++r) W(r, c) = sd * gauss(rng);
        Vector b(L);
        for (Index c = 0; c < L; ++c) b(c) = 0.1 * gauss(rng);
        h = ((h * W).rowwise() + b.transpose()).array().tanh().matrix();
      }
      out.codes = std::move(h);
      break;
    }
  }
  return out;
}

std::vector<Split> assign_splits(Index n, double train, double validation, std::uint64_t seed) {
  if (train <= 0 || validation < 0 || train + validation >= 1.0 + 1e-12)
    throw ConfigError("split fractions must leave room for a test split");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<Index>(std::llround(train * static_cast<double>(n)));
  const auto n_val = static_cast<Index>(std::llround(validation * static_cast<double>(n)));
  std::vector<Split> out(static_cast<std::size_t>(n), Split::test);
  for (Index k = 0; k < n; ++k) {
    const auto row = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    if (k < n_train)
      out[row] = Split::train;
    else if (k < n_train + n_val)
      out[row] = Split::validation;
  }
  return out;
}

CodedDataset make_synthetic_dataset(const SyntheticConfig& cfg, const MixingSpec& mixing, std::uint64_t seed,
                                    MixedCodes* generator) {
  if (cfg.factor_specs.empty()) throw ConfigError("synthetic data needs at least one factor");
  Matrix Z = generate_factors(cfg.factor_specs, cfg.n_samples, derive_seed(seed, {hash_name("factors")}),
                              cfg.grid_size);
  MixedCodes mixed = mix(mixing_input(Z), mixing);
  auto split = assign_splits(cfg.n_samples, cfg.train_fraction, cfg.validation_fraction,
                             derive_seed(seed, {hash_name("split")}));
  CodedDataset data(mixed.codes, std::move(Z), cfg.factor_specs, std::move(split));
  if (generator) *generator = std::move(mixed);
  return data;
}

double balanced_threshold(const Vector& values) {
  if (values.size() == 0) throw EmptySplit("threshold needs values");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double best = v.front() - 1.0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    if (!(v[k] < v[k + 1])) continue;
    const double above = (n - static_cast<double>(k + 1)) / n;
    const double gap = std::abs(above - 0.5);
    if (gap < best_gap) {
      best_gap = gap;
      best = 0.5 * (v[k] + v[k + 1]);
    }
  }
  return best;
}

std::vector<DownstreamTask> make_downstream_tasks(const CodedDataset& data, int n_reg, int n_cls, std::uint64_t seed) {
  const Index K = data.factor_count();
  if (n_reg < 0) n_reg = static_cast<int>(K);
  if (n_cls < 0) n_cls = static_cast<int>(K);

  // Every factor on a common scale: train-split standardization throughout.
  Matrix Z = data.factors();
  const auto stats = kernels::column_stats(Z(data.rows(Split::train), Eigen::all));
  for (Index j = 0; j < K; ++j) {
    const auto st = stats[static_cast<std::size_t>(j)];
    Z.col(j).array() -= st.mean;
    if (st.std > 0) Z.col(j) /= st.std;
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<DownstreamTask> tasks;
  int id = 0;
  for (int t = 0; t < n_reg; ++t) {
    DownstreamTask task;
    task.id = id++;
    task.kind = DownstreamKind::regression;
    task.weights.resize(K);
    for (Index j = 0; j < K; ++j) task.weights(j) = unit(rng);
    task.labels = Z * task.weights;
    tasks.push_back(std::move(task));
  }
  for (int t = 0; t < n_cls; ++t) {
    DownstreamTask task;
    task.id = id++;
    task.kind = DownstreamKind::classification;
    task.factor = t % K;
    const Vector train_values = Z(data.rows(Split::train), task.factor);
    task.threshold = balanced_threshold(train_values);
    task.labels = (Z.col(task.factor).array() > task.threshold).cast<double>();
    tasks.push_back(std::move(task));
  }
  return tasks;
}

OracleScores oracle_scores(const MixingSpec& mixing) {
  switch (mixing.kind) {
    case MixingKind::identity:
    case MixingKind::signed_permutation:
      return {1.0, 1.0, 1.0, 1.0};
    case MixingKind::noisy: {
      const double s2 = mixing.noise_std * mixing.noise_std;
      return {1.0, 1.0, 1.0 - s2 / (1.0 + s2), 1.0};
    }
    case MixingKind::linear_uniform:
      return {0.0, 0.0, 1.0, 1.0};
    case MixingKind::elementwise_monotone:
      return {1.0, 1.0, 1.0, std::nullopt};
    case MixingKind::random_linear:
    case MixingKind::random_mlp:
      break;
  }
  throw NotAnalytic(std::string("no closed-form scores for ") + to_string(mixing.kind));
}

}  // namespace dcies

#include "dcies/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dcies/rng.hpp"

namespace dcies {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) throw SchemaMismatch("matrix payload has wrong size");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

const char* task_name(TaskKind t) { return t == TaskKind::regression ? "regression" : "classification"; }

TaskKind task_from(const json& j) {
  return j.at("task").get<std::string>() == "regression" ? TaskKind::regression : TaskKind::classification;
}

}  // namespace

Targets Targets::subset(const std::vector<Index>& rows) const {
  Targets out{task, n_classes, {}, {}};
  if (task == TaskKind::regression) {
    out.values = values(rows);
  } else {
    out.labels.reserve(rows.size());
    for (Index r : rows) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

Targets targets_for(const CodedDataset& data, Index factor, Split split) {
  const auto& spec = data.factor_spec(factor);
  Targets t;
  if (spec.is_categorical()) {
    t.task = TaskKind::classification;
    t.n_classes = spec.classes();
    t.labels = data.labels_for(factor, split);
  } else {
    t.values = data.factor_for(factor, split);
  }
  return t;
}

double task_loss(const Matrix& pred, const Targets& y) {
  const Index n = y.size();
  if (n == 0) return 0.0;
  double total = 0.0;
  if (y.task == TaskKind::regression) {
    total = (pred.col(0) - y.values).squaredNorm();
  } else {
    for (Index i = 0; i < n; ++i) {
      const double p = pred(i, y.labels[static_cast<std::size_t>(i)]);
      total -= std::log(std::max(p, kProbabilityFloor));
    }
  }
  return total / static_cast<double>(n);
}

void softmax_rows(Matrix& logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i).array() = (logits.row(i).array() - mx).exp();
    logits.row(i) /= logits.row(i).sum();
  }
}

// ---------------------------------------------------------------------------
// Linear

LinearModel::LinearModel(Matrix weights, Vector bias, TaskKind task)
    : weights_(std::move(weights)), bias_(std::move(bias)), task_(task) {}

Matrix LinearModel::predict(const Matrix& X) const {
  if (X.cols() != weights_.rows()) throw SchemaMismatch("linear model input width mismatch");
  Matrix out = (X * weights_).rowwise() + bias_.transpose();
  if (task_ == TaskKind::classification) softmax_rows(out);
  return out;
}

json LinearModel::to_json() const {
  return json{{"type", "linear"}, {"task", task_name(task_)}, {"weights", matrix_to_json(weights_)},
              {"bias", to_std(bias_)}};
}

LinearModel LinearModel::from_json(const json& j) {
  return LinearModel(matrix_from_json(j.at("weights")), vector_from_json(j.at("bias")), task_from(j));
}

LinearModel fit_least_squares(const Matrix& X, const Vector& y, double ridge) {
  const Index n = X.rows();
  if (n == 0) throw EmptySplit("least squares on an empty design");
  const Eigen::RowVectorXd mx = X.colwise().mean();
  const double my = y.mean();
  const Matrix Xc = X.rowwise() - mx;
  Matrix G = Xc.transpose() * Xc;
  const double scale = std::max(G.diagonal().mean(), 1e-300);
  G.diagonal().array() += ridge * scale;
  const Vector w = G.ldlt().solve(Xc.transpose() * (y.array() - my).matrix());
  Vector b(1);
  b(0) = my - mx.dot(w);
  return LinearModel(w, b, TaskKind::regression);
}

// ---------------------------------------------------------------------------
// MLP

MlpModel::MlpModel(std::vector<DenseLayer> layers, TaskKind task) : layers_(std::move(layers)), task_(task) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
}

Matrix MlpModel::predict(const Matrix& X) const {
  if (X.cols() != input_dim()) throw SchemaMismatch("network input width mismatch");
  Matrix h = X;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = (h * layers_[l].weights).rowwise() + layers_[l].bias.transpose();
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  if (task_ == TaskKind::classification) softmax_rows(h);
  return h;
}

json MlpModel::to_json() const {
  json layers = json::array();
  for (const auto& l : layers_) layers.push_back({{"weights", matrix_to_json(l.weights)}, {"bias", to_std(l.bias)}});
  return json{{"type", "mlp"}, {"task", task_name(task_)}, {"layers", layers}};
}

MlpModel MlpModel::from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& l : j.at("layers"))
    layers.push_back(DenseLayer{matrix_from_json(l.at("weights")), vector_from_json(l.at("bias"))});
  return MlpModel(std::move(layers), task_from(j));
}

long long mlp_parameter_count(Index inputs, const std::vector<int>& hidden_widths, Index outputs) {
  long long total = 0;
  long long fan_in = inputs;
  for (int w : hidden_widths) {
    total += fan_in * w + w;
    fan_in = w;
  }
  return total + fan_in * outputs + outputs;
}

namespace {

struct AdamSlot {
  Matrix mw, vw;
  Vector mb, vb;
};

void adam_update(DenseLayer& layer, AdamSlot& s, const Matrix& gw, const Vector& gb, const AdamConfig& cfg,
                 double bc1, double bc2) {
  s.mw = cfg.beta1 * s.mw + (1.0 - cfg.beta1) * gw;
  s.vw = cfg.beta2 * s.vw + (1.0 - cfg.beta2) * gw.cwiseAbs2();
  s.mb = cfg.beta1 * s.mb + (1.0 - cfg.beta1) * gb;
  s.vb = cfg.beta2 * s.vb + (1.0 - cfg.beta2) * gb.cwiseAbs2();
  const double lr = cfg.learning_rate;
  layer.weights.array() -= lr * (s.mw.array() / bc1) / ((s.vw.array() / bc2).sqrt() + cfg.epsilon);
  layer.bias.array() -= lr * (s.mb.array() / bc1) / ((s.vb.array() / bc2).sqrt() + cfg.epsilon);
}

double evaluate(const MlpModel& m, const Matrix& X, const Targets& y) { return task_loss(m.predict(X), y); }

}  // namespace

MlpModel train_mlp(const Matrix& X, const Targets& y, const Matrix& X_val, const Targets& y_val,
                   const std::vector<int>& hidden_widths, const AdamConfig& cfg, std::uint64_t seed,
                   TrainingDiagnostics* diag) {
  const Index n = X.rows();
  if (n == 0 || y.size() != n) throw EmptySplit("network training needs a non-empty train split");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0))
    throw ConfigError("invalid Adam configuration");
  const bool classify = y.task == TaskKind::classification;
  const Index outputs = classify ? y.n_classes : 1;

  Rng rng(seed);
  std::vector<DenseLayer> layers;
  std::vector<AdamSlot> slots;
  Index fan_in = X.cols();
  auto add_layer = [&](Index fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer l{Matrix(fan_in, fan_out), Vector(fan_out)};
    for (Index c = 0; c < fan_out; ++c)
      for (Index r = 0; r < fan_in; ++r) l.weights(r, c) = u(rng);
    for (Index c = 0; c < fan_out; ++c) l.bias(c) = u(rng);
    slots.push_back(AdamSlot{Matrix::Zero(fan_in, fan_out), Matrix::Zero(fan_in, fan_out), Vector::Zero(fan_out),
                             Vector::Zero(fan_out)});
    layers.push_back(std::move(l));
    fan_in = fan_out;
  };
  for (int w : hidden_widths) add_layer(w);
  add_layer(outputs);

  const bool use_val = X_val.rows() > 0;
  MlpModel best(layers, y.task);
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const std::size_t L = layers.size();
  std::vector<Matrix> acts(L + 1);
  long long step = 0;
  double bc1 = 1.0, bc2 = 1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index bs = std::min<Index>(cfg.batch_size, n - start);
      const std::vector<Index> idx(order.begin() + start, order.begin() + start + bs);
      acts[0] = X(idx, Eigen::all);
      for (std::size_t l = 0; l < L; ++l) {
        Matrix z = (acts[l] * layers[l].weights).rowwise() + layers[l].bias.transpose();
        if (l + 1 < L) z = z.cwiseMax(0.0);
        acts[l + 1] = std::move(z);
      }
      // Gradient of the mean loss w.r.t. the output pre-activation.
      Matrix delta = acts[L];
      if (classify) {
        softmax_rows(delta);
        for (Index i = 0; i < bs; ++i) delta(i, y.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]) -= 1.0;
        delta /= static_cast<double>(bs);
      } else {
        for (Index i = 0; i < bs; ++i) delta(i, 0) -= y.values(idx[static_cast<std::size_t>(i)]);
        delta *= 2.0 / static_cast<double>(bs);
      }
      ++step;
      bc1 *= cfg.beta1;
      bc2 *= cfg.beta2;
      for (std::size_t l = L; l-- > 0;) {
        const Matrix gw = acts[l].transpose() * delta;
        const Vector gb = delta.colwise().sum().transpose();
        if (l > 0) {
          Matrix back = delta * layers[l].weights.transpose();
          back.array() *= (acts[l].array() > 0.0).cast<double>();
          delta = std::move(back);
        }
        adam_update(layers[l], slots[l], gw, gb, cfg, 1.0 - bc1, 1.0 - bc2);
      }
    }
    const MlpModel current(layers, y.task);
    const double loss = use_val ? evaluate(current, X_val, y_val) : evaluate(current, X, y);
    if (!std::isfinite(loss)) throw TrainingDiverged("network loss became non-finite at epoch " + std::to_string(epoch));
    if (loss < best_loss) {
      best_loss = loss;
      best = current;
      best_epoch = epoch;
    }
  }
  if (diag) {
    diag->epochs = cfg.epochs;
    diag->best_epoch = best_epoch;
    diag->validation_loss = use_val ? best_loss : 0.0;
    diag->train_loss = evaluate(best, X, y);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Random Fourier features

RffModel::RffModel(Matrix omega, Vector offset, double bandwidth, LinearModel head)
    : omega_(std::move(omega)), offset_(std::move(offset)), bandwidth_(bandwidth), head_(std::move(head)) {}

Matrix RffModel::features(const Matrix& X) const {
  if (X.cols() != omega_.rows()) throw SchemaMismatch("feature map input width mismatch");
  return kernels::rff_features(X, omega_, offset_, std::sqrt(2.0 / static_cast<double>(omega_.cols())));
}

Matrix RffModel::predict(const Matrix& X) const { return head_.predict(features(X)); }

json RffModel::to_json() const {
  return json{{"type", "rff"}, {"omega", matrix_to_json(omega_)}, {"offset", to_std(offset_)},
              {"bandwidth", bandwidth_}, {"head", head_.to_json()}};
}

RffModel RffModel::from_json(const json& j) {
  return RffModel(matrix_from_json(j.at("omega")), vector_from_json(j.at("offset")), j.at("bandwidth").get<double>(),
                  LinearModel::from_json(j.at("head")));
}

RffModel train_rff(const Matrix& X, const Targets& y, const Matrix& X_val, const Targets& y_val,
                   Index n_features, const RffConfig& cfg, std::uint64_t seed, TrainingDiagnostics* diag) {
  const Index n = X.rows();
  const Index L = X.cols();
  if (n == 0) throw EmptySplit("random-feature training needs a non-empty train split");
  if (n_features < 1 || cfg.bandwidth_multipliers.empty() || cfg.ridge_grid.empty())
    throw ConfigError("invalid random-feature configuration");

  Rng rng(seed);
  // Median heuristic on a subsample of the train rows.
  Matrix sub = X;
  if (n > cfg.median_subsample) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(cfg.median_subsample));
    std::sort(idx.begin(), idx.end());
    sub = X(idx, Eigen::all);
  }
  double median = kernels::median_pairwise_distance(sub);
  if (!(median > 0)) median = 1.0;

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  Matrix base(L, n_features);
  for (Index c = 0; c < n_features; ++c)
    for (Index r = 0; r < L; ++r) base(r, c) = gauss(rng);
  Vector offset(n_features);
  for (Index c = 0; c < n_features; ++c) offset(c) = phase(rng);

  const bool use_val = X_val.rows() > 0;
  const Matrix& Xsel = use_val ? X_val : X;
  const Targets& ysel = use_val ? y_val : y;

  double best_loss = std::numeric_limits<double>::infinity();
  std::optional<RffModel> best;
  std::string chosen;
  for (double mult : cfg.bandwidth_multipliers) {
    const double bandwidth = median * mult;
    const Matrix omega = base / bandwidth;
    const RffModel probe(omega, offset, bandwidth, LinearModel{});
    const Matrix phi = probe.features(X);
    const Matrix phi_sel = probe.features(Xsel);

    if (y.task == TaskKind::regression) {
      const Eigen::RowVectorXd mphi = phi.colwise().mean();
      const double my = y.values.mean();
      const Matrix phic = phi.rowwise() - mphi;
      Matrix G = Matrix::Zero(n_features, n_features);
      G.selfadjointView<Eigen::Lower>().rankUpdate(phic.transpose());
      G = G.selfadjointView<Eigen::Lower>();
      const Vector rhs = phic.transpose() * (y.values.array() - my).matrix();
      const double scale = std::max(G.diagonal().mean(), 1e-300);
      for (double ridge : cfg.ridge_grid) {
        Matrix A = G;
        A.diagonal().array() += ridge * scale;
        const Vector w = A.ldlt().solve(rhs);
        if (!w.allFinite()) continue;
        Vector b(1);
        b(0) = my - mphi.dot(w);
        LinearModel head(w, b, TaskKind::regression);
        const double loss = task_loss(head.predict(phi_sel), ysel);
        if (loss < best_loss) {
          best_loss = loss;
          best.emplace(omega, offset, bandwidth, std::move(head));
          chosen = "bandwidth_multiplier=" + std::to_string(mult) + ",ridge=" + std::to_string(ridge);
        }
      }
    } else {
      const Matrix phi_val = use_val ? probe.features(X_val) : Matrix{};
      const MlpModel net = train_mlp(phi, y, phi_val, y_val, {}, cfg.head, derive_seed(seed, {1}));
      LinearModel head(net.layers().front().weights, net.layers().front().bias, TaskKind::classification);
      const double loss = task_loss(head.predict(phi_sel), ysel);
      if (loss < best_loss) {
        best_loss = loss;
        best.emplace(omega, offset, bandwidth, std::move(head));
        chosen = "bandwidth_multiplier=" + std::to_string(mult);
      }
    }
  }
  if (!best) throw TrainingDiverged("random-feature head could not be solved");
  if (diag) {
    diag->selected = chosen;
    diag->validation_loss = use_val ? best_loss : 0.0;
    diag->train_loss = task_loss(best->predict(X), y);
  }
  return *best;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const ProbeModel> model_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "linear") return std::make_shared<LinearModel>(LinearModel::from_json(j));
  if (type == "mlp") return std::make_shared<MlpModel>(MlpModel::from_json(j));
  if (type == "rff") return std::make_shared<RffModel>(RffModel::from_json(j));
  if (type == "forest") return std::make_shared<ForestModel>(ForestModel::from_json(j));
  throw SchemaMismatch("unknown model type '" + type + "'");
}

}  // namespace dcies

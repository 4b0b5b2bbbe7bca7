#pragma once

// Trainable predictor families used as probes: linear heads, two-hidden-layer
// rectifier networks, random Fourier feature heads and CART random forests.

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dcies/core.hpp"
#include "dcies/kernels.hpp"

namespace dcies {

enum class TaskKind { regression, classification };

/// Supervised targets for one factor on one split.
struct Targets {
  TaskKind task = TaskKind::regression;
  int n_classes = 0;
  Vector values;            // regression
  std::vector<int> labels;  // classification

  Index size() const {
    return task == TaskKind::regression ? values.size() : static_cast<Index>(labels.size());
  }
  Targets subset(const std::vector<Index>& rows) const;
};

Targets targets_for(const CodedDataset& data, Index factor, Split split);

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean squared error or mean cross-entropy of `pred` (N x 1 values, or N x C
/// probabilities).
double task_loss(const Matrix& pred, const Targets& y);

/// Row-wise softmax, in place.
void softmax_rows(Matrix& logits);

class ProbeModel {
 public:
  virtual ~ProbeModel() = default;
  virtual std::string kind() const = 0;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;
  /// Regression: N x 1 predictions. Classification: N x C probabilities.
  virtual Matrix predict(const Matrix& X) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

class LinearModel final : public ProbeModel {
 public:
  LinearModel() = default;
  LinearModel(Matrix weights, Vector bias, TaskKind task);

  std::string kind() const override { return "linear"; }
  Index input_dim() const override { return weights_.rows(); }
  Index output_dim() const override { return weights_.cols(); }
  Matrix predict(const Matrix& X) const override;
  nlohmann::json to_json() const override;
  static LinearModel from_json(const nlohmann::json& j);

  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }
  TaskKind task() const { return task_; }

 private:
  Matrix weights_;  // L x outputs
  Vector bias_;
  TaskKind task_ = TaskKind::regression;
};

/// Ordinary least squares with a small ridge, solved in closed form.
LinearModel fit_least_squares(const Matrix& X, const Vector& y, double ridge = 1e-10);

struct DenseLayer {
  Matrix weights;  // fan_in x fan_out
  Vector bias;
};

struct AdamConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingDiagnostics {
  double train_loss = 0.0;
  double validation_loss = 0.0;
  int epochs = 0;
  int best_epoch = 0;
  std::string selected;  // e.g. chosen bandwidth / ridge
};

/// Fully connected network with rectifier hidden layers and a linear (or
/// softmax) output layer. No hidden layers makes it a linear model.
class MlpModel final : public ProbeModel {
 public:
  MlpModel() = default;
  MlpModel(std::vector<DenseLayer> layers, TaskKind task);

  std::string kind() const override { return "mlp"; }
  Index input_dim() const override { return layers_.front().weights.rows(); }
  Index output_dim() const override { return layers_.back().weights.cols(); }
  Matrix predict(const Matrix& X) const override;
  nlohmann::json to_json() const override;
  static MlpModel from_json(const nlohmann::json& j);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  TaskKind task() const { return task_; }

 private:
  std::vector<DenseLayer> layers_;
  TaskKind task_ = TaskKind::regression;
};

/// Trains with minibatch Adam; keeps the parameters of the epoch with the
/// lowest validation loss (train loss when the validation set is empty).
MlpModel train_mlp(const Matrix& X, const Targets& y, const Matrix& X_val, const Targets& y_val,
                   const std::vector<int>& hidden_widths, const AdamConfig& cfg, std::uint64_t seed,
                   TrainingDiagnostics* diag = nullptr);

/// Parameters of a network with the given hidden widths.
long long mlp_parameter_count(Index inputs, const std::vector<int>& hidden_widths, Index outputs);

struct RffConfig {
  std::vector<double> bandwidth_multipliers{1.0, 8.0, 64.0};
  std::vector<double> ridge_grid{1e-9, 1e-5, 1e-2};  // relative to mean Gram diagonal
  int median_subsample = 1000;
  AdamConfig head;  // classification heads
};

/// Random Fourier features sqrt(2/D) cos(omega' c + b) of a Gaussian kernel,
/// followed by a linear or softmax head.
class RffModel final : public ProbeModel {
 public:
  RffModel() = default;
  RffModel(Matrix omega, Vector offset, double bandwidth, LinearModel head);

  std::string kind() const override { return "rff"; }
  Index input_dim() const override { return omega_.rows(); }
  Index output_dim() const override { return head_.output_dim(); }
  Matrix predict(const Matrix& X) const override;
  nlohmann::json to_json() const override;
  static RffModel from_json(const nlohmann::json& j);

  Matrix features(const Matrix& X) const;
  Index feature_count() const { return omega_.cols(); }
  double bandwidth() const { return bandwidth_; }
  const LinearModel& head() const { return head_; }

 private:
  Matrix omega_;  // L x D, already divided by the bandwidth
  Vector offset_;
  double bandwidth_ = 1.0;
  LinearModel head_;
};

RffModel train_rff(const Matrix& X, const Targets& y, const Matrix& X_val, const Targets& y_val,
                   Index n_features, const RffConfig& cfg, std::uint64_t seed,
                   TrainingDiagnostics* diag = nullptr);

enum class MaxFeatures { all, sqrt, third };

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  MaxFeatures regression_features = MaxFeatures::all;
  MaxFeatures classification_features = MaxFeatures::sqrt;
  bool bootstrap = true;
  int min_samples_split = 2;
};

/// Random forest of CART trees. Tracks per-feature impurity decrease and split
/// counts accumulated during training.
class ForestModel final : public ProbeModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<kernels::FlatTree> trees, Index n_features, TaskKind task, int n_classes,
              Vector impurity_decrease, std::vector<long long> split_counts);

  std::string kind() const override { return "forest"; }
  Index input_dim() const override { return n_features_; }
  Index output_dim() const override { return task_ == TaskKind::regression ? 1 : n_classes_; }
  Matrix predict(const Matrix& X) const override;
  nlohmann::json to_json() const override;
  static ForestModel from_json(const nlohmann::json& j);

  const std::vector<kernels::FlatTree>& trees() const { return trees_; }
  /// Total weighted impurity decrease per feature, summed over trees.
  const Vector& impurity_decrease() const { return impurity_decrease_; }
  const std::vector<long long>& split_counts() const { return split_counts_; }
  TaskKind task() const { return task_; }

 private:
  std::vector<kernels::FlatTree> trees_;
  Index n_features_ = 0;
  TaskKind task_ = TaskKind::regression;
  int n_classes_ = 0;
  Vector impurity_decrease_;
  std::vector<long long> split_counts_;
};

/// Bootstrap draws and per-node feature subsets derive from `seed` only, so
/// two fits with the same seed on same-shaped data draw identically.
ForestModel train_forest(const Matrix& X, const Targets& y, const ForestConfig& cfg, std::uint64_t seed);

std::shared_ptr<const ProbeModel> model_from_json(const nlohmann::json& j);

}  // namespace dcies

// CART random forest with presorted feature orders. Each node keeps, for every
// feature, the in-bag rows of the node sorted by that feature; splitting
// stably partitions those lists so no node ever re-sorts.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcies/models.hpp"
#include "dcies/rng.hpp"

namespace dcies {

using nlohmann::json;

ForestModel::ForestModel(std::vector<kernels::FlatTree> trees, Index n_features, TaskKind task, int n_classes,
                         Vector impurity_decrease, std::vector<long long> split_counts)
    : trees_(std::move(trees)),
      n_features_(n_features),
      task_(task),
      n_classes_(n_classes),
      impurity_decrease_(std::move(impurity_decrease)),
      split_counts_(std::move(split_counts)) {}

Matrix ForestModel::predict(const Matrix& X) const {
  if (X.cols() != n_features_) throw SchemaMismatch("forest input width mismatch");
  return kernels::forest_predict(trees_, X);
}

json ForestModel::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) {
    trees.push_back({{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left}, {"right", t.right},
                     {"value_offset", t.value_offset}, {"values", t.values}, {"value_width", t.value_width}});
  }
  return json{{"type", "forest"},
              {"task", task_ == TaskKind::regression ? "regression" : "classification"},
              {"n_features", n_features_},
              {"n_classes", n_classes_},
              {"impurity_decrease", std::vector<double>(impurity_decrease_.data(),
                                                        impurity_decrease_.data() + impurity_decrease_.size())},
              {"split_counts", split_counts_},
              {"trees", trees}};
}

ForestModel ForestModel::from_json(const json& j) {
  std::vector<kernels::FlatTree> trees;
  for (const auto& t : j.at("trees")) {
    kernels::FlatTree ft;
    ft.feature = t.at("feature").get<std::vector<int>>();
    ft.threshold = t.at("threshold").get<std::vector<double>>();
    ft.left = t.at("left").get<std::vector<int>>();
    ft.right = t.at("right").get<std::vector<int>>();
    ft.value_offset = t.at("value_offset").get<std::vector<int>>();
    ft.values = t.at("values").get<std::vector<double>>();
    ft.value_width = t.at("value_width").get<int>();
    trees.push_back(std::move(ft));
  }
  const auto imp = j.at("impurity_decrease").get<std::vector<double>>();
  const TaskKind task =
      j.at("task").get<std::string>() == "regression" ? TaskKind::regression : TaskKind::classification;
  return ForestModel(std::move(trees), j.at("n_features").get<Index>(), task, j.at("n_classes").get<int>(),
                     Eigen::Map<const Vector>(imp.data(), static_cast<Index>(imp.size())),
                     j.at("split_counts").get<std::vector<long long>>());
}

namespace {

struct TreeResult {
  kernels::FlatTree tree;
  std::vector<double> importance;
  std::vector<long long> splits;
};

int features_to_try(MaxFeatures mf, Index L) {
  switch (mf) {
    case MaxFeatures::all: return static_cast<int>(L);
    case MaxFeatures::sqrt: return std::max(1, static_cast<int>(std::sqrt(static_cast<double>(L))));
    case MaxFeatures::third: return std::max(1, static_cast<int>(L / 3));
  }
  return static_cast<int>(L);
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const Targets& y, const std::vector<std::vector<Index>>& presorted,
              const ForestConfig& cfg, std::uint64_t seed)
      : X_(X), y_(y), cfg_(cfg), rng_(seed), L_(X.cols()) {
    classify_ = y.task == TaskKind::classification;
    width_ = classify_ ? y.n_classes : 1;
    mtry_ = features_to_try(classify_ ? cfg.classification_features : cfg.regression_features, L_);

    const Index n = X.rows();
    weight_.assign(static_cast<std::size_t>(n), 0.0);
    if (cfg.bootstrap) {
      std::uniform_int_distribution<Index> pick(0, n - 1);
      for (Index i = 0; i < n; ++i) weight_[static_cast<std::size_t>(pick(rng_))] += 1.0;
    } else {
      std::fill(weight_.begin(), weight_.end(), 1.0);
    }
    m_ = 0;
    for (double w : weight_) m_ += w > 0 ? 1 : 0;
    order_.resize(static_cast<std::size_t>(m_ * L_));
    for (Index f = 0; f < L_; ++f) {
      std::size_t k = static_cast<std::size_t>(f * m_);
      for (Index r : presorted[static_cast<std::size_t>(f)])
        if (weight_[static_cast<std::size_t>(r)] > 0) order_[k++] = r;
    }
    scratch_.resize(static_cast<std::size_t>(m_));
    left_flag_.assign(static_cast<std::size_t>(n), 0);
    result_.tree.value_width = width_;
    result_.importance.assign(static_cast<std::size_t>(L_), 0.0);
    result_.splits.assign(static_cast<std::size_t>(L_), 0);
  }

  TreeResult build() {
    struct Pending {
      int node;
      Index begin, end;
      int depth;
    };
    std::vector<Pending> stack;
    stack.push_back({new_node(), 0, m_, 0});
    root_weight_ = -1.0;
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const NodeStats st = stats(p.begin, p.end);
      if (root_weight_ < 0) root_weight_ = st.weight;
      const double impurity = node_impurity(st);

      Split best;
      if (p.depth < cfg_.max_depth && st.weight >= cfg_.min_samples_split && impurity > 1e-14)
        best = find_split(p.begin, p.end, st);
      if (best.feature < 0) {
        make_leaf(p.node, st);
        continue;
      }
      auto& t = result_.tree;
      const auto nid = static_cast<std::size_t>(p.node);
      t.feature[nid] = best.feature;
      t.threshold[nid] = best.threshold;
      const double decrease = st.weight * impurity - best.child_cost;
      result_.importance[static_cast<std::size_t>(best.feature)] += std::max(decrease, 0.0) / root_weight_;
      result_.splits[static_cast<std::size_t>(best.feature)] += 1;

      const Index mid = partition(p.begin, p.end, best);
      const int left = new_node();
      const int right = new_node();
      result_.tree.left[nid] = left;
      result_.tree.right[nid] = right;
      stack.push_back({right, mid, p.end, p.depth + 1});
      stack.push_back({left, p.begin, mid, p.depth + 1});
    }
    return std::move(result_);
  }

 private:
  struct NodeStats {
    double weight = 0.0;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::vector<double> counts;
  };

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    Index position = 0;  // rows [begin, position) of the feature list go left
    double child_cost = 0.0;
  };

  const Index* list(Index f) const { return order_.data() + f * m_; }
  Index* list(Index f) { return order_.data() + f * m_; }

  double target(Index row) const { return y_.values(row); }
  int label(Index row) const { return y_.labels[static_cast<std::size_t>(row)]; }

  NodeStats stats(Index begin, Index end) const {
    NodeStats st;
    if (classify_) st.counts.assign(static_cast<std::size_t>(width_), 0.0);
    const Index* rows = list(0);
    for (Index k = begin; k < end; ++k) {
      const Index r = rows[k];
      const double w = weight_[static_cast<std::size_t>(r)];
      st.weight += w;
      if (classify_) {
        st.counts[static_cast<std::size_t>(label(r))] += w;
      } else {
        st.sum += w * target(r);
        st.sum_sq += w * target(r) * target(r);
      }
    }
    return st;
  }

  double node_impurity(const NodeStats& st) const {
    if (st.weight <= 0) return 0.0;
    if (classify_) {
      double sq = 0.0;
      for (double c : st.counts) sq += c * c;
      return 1.0 - sq / (st.weight * st.weight);
    }
    const double mean = st.sum / st.weight;
    return std::max(st.sum_sq / st.weight - mean * mean, 0.0);
  }

  Split find_split(Index begin, Index end, const NodeStats& st) {
    std::vector<int> features(static_cast<std::size_t>(L_));
    std::iota(features.begin(), features.end(), 0);
    Split best;
    double best_gain = -std::numeric_limits<double>::infinity();
    int tried = 0;
    // Fisher-Yates draw without replacement; constant features do not count.
    for (Index i = 0; i < L_ && tried < mtry_; ++i) {
      std::uniform_int_distribution<Index> pick(i, L_ - 1);
      std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(pick(rng_))]);
      const int f = features[static_cast<std::size_t>(i)];
      const Index* rows = list(f);
      if (X_(rows[begin], f) >= X_(rows[end - 1], f)) continue;
      ++tried;
      scan_feature(f, begin, end, st, best, best_gain);
    }
    if (best.feature >= 0) {
      // Child cost = total weighted impurity of the two children.
      best.child_cost = classify_ ? st.weight - best_gain : st.sum_sq - best_gain;
    }
    return best;
  }

  // Gain proxy: for regression sum_L^2/w_L + sum_R^2/w_R, for classification
  // sum_k cL_k^2/w_L + sum_k cR_k^2/w_R. Larger is better.
  void scan_feature(int f, Index begin, Index end, const NodeStats& st, Split& best, double& best_gain) {
    const Index* rows = list(f);
    double wl = 0.0, sl = 0.0;
    std::vector<double> cl;
    double sql = 0.0, sqr = 0.0;
    std::vector<double> cr;
    if (classify_) {
      cl.assign(static_cast<std::size_t>(width_), 0.0);
      cr = st.counts;
      for (double c : cr) sqr += c * c;
    }
    for (Index k = begin; k + 1 < end; ++k) {
      const Index r = rows[k];
      const double w = weight_[static_cast<std::size_t>(r)];
      wl += w;
      if (classify_) {
        const auto c = static_cast<std::size_t>(label(r));
        sql += (cl[c] + w) * (cl[c] + w) - cl[c] * cl[c];
        sqr += (cr[c] - w) * (cr[c] - w) - cr[c] * cr[c];
        cl[c] += w;
        cr[c] -= w;
      } else {
        sl += w * target(r);
      }
      const double xv = X_(r, f);
      const double xn = X_(rows[k + 1], f);
      if (!(xv < xn)) continue;
      const double wr = st.weight - wl;
      double gain;
      if (classify_) {
        gain = sql / wl + sqr / wr;
      } else {
        const double sr = st.sum - sl;
        gain = sl * sl / wl + sr * sr / wr;
      }
      if (gain > best_gain) {
        best_gain = gain;
        best.feature = f;
        // Threshold at the left value rather than the midpoint, so routing
        // depends only on the order of values along the feature.
        best.threshold = xv;
        best.position = k + 1;
      }
    }
  }

  Index partition(Index begin, Index end, const Split& s) {
    const Index* chosen = list(s.feature);
    for (Index k = begin; k < end; ++k) left_flag_[static_cast<std::size_t>(chosen[k])] = k < s.position ? 1 : 0;
    const Index mid = s.position;
    for (Index f = 0; f < L_; ++f) {
      Index* rows = list(f);
      Index l = begin;
      Index r = 0;
      for (Index k = begin; k < end; ++k) {
        const Index row = rows[k];
        if (left_flag_[static_cast<std::size_t>(row)])
          rows[l++] = row;
        else
          scratch_[static_cast<std::size_t>(r++)] = row;
      }
      std::copy(scratch_.begin(), scratch_.begin() + r, rows + l);
    }
    return mid;
  }

  int new_node() {
    auto& t = result_.tree;
    t.feature.push_back(-1);
    t.threshold.push_back(0.0);
    t.left.push_back(-1);
    t.right.push_back(-1);
    t.value_offset.push_back(-1);
    return static_cast<int>(t.feature.size() - 1);
  }

  void make_leaf(int node, const NodeStats& st) {
    auto& t = result_.tree;
    t.value_offset[static_cast<std::size_t>(node)] = static_cast<int>(t.values.size());
    if (classify_) {
      for (double c : st.counts) t.values.push_back(st.weight > 0 ? c / st.weight : 1.0 / width_);
    } else {
      t.values.push_back(st.weight > 0 ? st.sum / st.weight : 0.0);
    }
  }

  const Matrix& X_;
  const Targets& y_;
  const ForestConfig& cfg_;
  Rng rng_;
  Index L_;
  bool classify_ = false;
  int width_ = 1;
  int mtry_ = 1;
  Index m_ = 0;
  double root_weight_ = -1.0;
  std::vector<double> weight_;
  std::vector<Index> order_;
  std::vector<Index> scratch_;
  std::vector<char> left_flag_;
  TreeResult result_;
};

}  // namespace

ForestModel train_forest(const Matrix& X, const Targets& y, const ForestConfig& cfg, std::uint64_t seed) {
  const Index n = X.rows();
  const Index L = X.cols();
  if (n == 0 || y.size() != n) throw EmptySplit("forest training needs a non-empty train split");
  if (cfg.n_trees < 1 || cfg.max_depth < 0) throw ConfigError("invalid forest configuration");

  std::vector<std::vector<Index>> presorted(static_cast<std::size_t>(L));
  for (Index f = 0; f < L; ++f) {
    auto& o = presorted[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), Index{0});
    std::stable_sort(o.begin(), o.end(), [&](Index a, Index b) { return X(a, f) < X(b, f); });
  }

  std::vector<TreeResult> results(static_cast<std::size_t>(cfg.n_trees));
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < cfg.n_trees; ++t) {
    TreeBuilder builder(X, y, presorted, cfg, derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    results[static_cast<std::size_t>(t)] = builder.build();
  }

  std::vector<kernels::FlatTree> trees;
  trees.reserve(results.size());
  Vector importance = Vector::Zero(L);
  std::vector<long long> splits(static_cast<std::size_t>(L), 0);
  for (auto& r : results) {
    for (Index f = 0; f < L; ++f) {
      importance(f) += r.importance[static_cast<std::size_t>(f)];
      splits[static_cast<std::size_t>(f)] += r.splits[static_cast<std::size_t>(f)];
    }
    trees.push_back(std::move(r.tree));
  }
  return ForestModel(std::move(trees), L, y.task, y.task == TaskKind::classification ? y.n_classes : 0,
                     std::move(importance), std::move(splits));
}

}  // namespace dcies

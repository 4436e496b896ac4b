#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fairkd/common.hpp"

namespace fairkd {

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;
  int leaf_id = -1;

  bool is_leaf() const { return feature < 0; }
};

/// Binary regression tree. Samples with x[feature] <= threshold go left.
/// Leaf ids run 0..leaf_count-1 in left-to-right order.
class Tree {
 public:
  Tree() = default;
  Tree(std::vector<TreeNode> nodes, int input_width);

  /// A tree with a single leaf holding `value`.
  static Tree constant(double value, int input_width);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int leaf_count() const { return leaf_count_; }
  int input_width() const { return input_width_; }
  const std::vector<int>& used_features() const { return used_features_; }

  /// Leaf values indexed by leaf id (the q of the leaf-embedding output map).
  std::vector<double> leaf_values() const;

  template <typename Derived>
  int leaf_index(const Eigen::DenseBase<Derived>& x) const {
    check_width(static_cast<int>(x.size()));
    int node = 0;
    while (!nodes_[node].is_leaf()) {
      const TreeNode& n = nodes_[node];
      node = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes_[node].leaf_id;
  }

  template <typename Derived>
  double predict(const Eigen::DenseBase<Derived>& x) const {
    check_width(static_cast<int>(x.size()));
    int node = 0;
    while (!nodes_[node].is_leaf()) {
      const TreeNode& n = nodes_[node];
      node = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes_[node].leaf_value;
  }

 private:
  void check_width(int width) const {
    if (width != input_width_) fail(ErrorCode::kShape, "tree input width mismatch");
  }

  std::vector<TreeNode> nodes_;
  std::vector<int> used_features_;
  int leaf_count_ = 0;
  int input_width_ = 0;
};

struct GbdtParams {
  int n_trees = 100;
  int max_depth = 6;
  int min_samples_leaf = 20;
  double learning_rate = 0.1;
  double feature_fraction = 1.0;
  double lambda = 1.0;  // L2 penalty in leaf values and split gains
  std::uint64_t seed = 0;

  void validate() const;
};

/// Boosted ensemble: margin(x) = base_score + learning_rate * sum_t tree_t(x).
struct GbdtModel {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;
  int input_width = 0;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Second-order split gain G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l).
inline double split_gain(double gl, double hl, double gr, double hr, double lambda) {
  return gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - (gl + gr) * (gl + gr) / (hl + hr + lambda);
}

/// Greedy exact regression tree on gradient/hessian statistics. Leaves hold
/// -sum(g) / (sum(h) + lambda); growth stops at max_depth or when no split
/// has positive gain. Uses max_depth, min_samples_leaf and lambda from params.
Tree fit_tree(const Matrix& x, std::span<const double> gradients, std::span<const double> hessians,
              const GbdtParams& params);

/// Best root split (the depth-1 search) without building a tree.
SplitCandidate best_root_split(const Matrix& x, std::span<const double> gradients,
                               std::span<const double> hessians, int min_samples_leaf, double lambda);

struct GbdtTrace {
  std::vector<double> training_loss;  // mean logistic loss after each stage (index 0 = base score only)
};

GbdtModel fit_gbdt(const Matrix& x, std::span<const int> labels, const GbdtParams& params,
                   GbdtTrace* trace = nullptr);

template <typename Derived>
double predict_margin(const GbdtModel& model, const Eigen::DenseBase<Derived>& x) {
  if (x.size() != model.input_width) fail(ErrorCode::kShape, "GBDT input width mismatch");
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.predict(x);
  return model.base_score + model.learning_rate * sum;
}

template <typename Derived>
double predict_proba(const GbdtModel& model, const Eigen::DenseBase<Derived>& x) {
  return sigmoid(predict_margin(model, x));
}

template <typename Derived>
std::vector<int> leaf_indices(const GbdtModel& model, const Eigen::DenseBase<Derived>& x) {
  if (x.size() != model.input_width) fail(ErrorCode::kShape, "GBDT input width mismatch");
  std::vector<int> out;
  out.reserve(model.trees.size());
  for (const auto& t : model.trees) out.push_back(t.leaf_index(x));
  return out;
}

Vector predict_margin(const GbdtModel& model, const Matrix& x);

/// N x n_trees matrix of leaf ids.
IndexMatrix leaf_indices(const GbdtModel& model, const Matrix& x);

/// Sorted union of the features split on by `trees`.
std::vector<int> used_feature_indices(std::span<const Tree> trees);

struct RfParams {
  int n_trees = 100;
  int max_depth = 10;
  int min_samples_leaf = 5;
  int max_features = 0;  // 0 means floor(sqrt(D))
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Leaves store the positive-class proportion of their (bootstrap) samples.
struct RfModel {
  std::vector<Tree> trees;
  int input_width = 0;
};

RfModel fit_random_forest(const Matrix& x, std::span<const int> labels, const RfParams& params);

template <typename Derived>
double predict_proba(const RfModel& model, const Eigen::DenseBase<Derived>& x) {
  if (x.size() != model.input_width) fail(ErrorCode::kShape, "forest input width mismatch");
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.predict(x);
  return sum / static_cast<double>(model.trees.size());
}

Vector predict_proba(const RfModel& model, const Matrix& x);

}  // namespace fairkd

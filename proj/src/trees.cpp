#include "fairkd/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fairkd/rng.hpp"

namespace fairkd {

Tree::Tree(std::vector<TreeNode> nodes, int input_width) : nodes_(std::move(nodes)), input_width_(input_width) {
  if (nodes_.empty()) fail(ErrorCode::kConfiguration, "tree needs at least one node");
  std::set<int> used;
  int leaves = 0;
  for (const auto& n : nodes_) {
    if (n.is_leaf()) {
      ++leaves;
    } else {
      if (n.feature >= input_width) fail(ErrorCode::kConfiguration, "split feature outside input width");
      used.insert(n.feature);
    }
  }
  leaf_count_ = leaves;
  used_features_.assign(used.begin(), used.end());
}

Tree Tree::constant(double value, int input_width) {
  TreeNode leaf;
  leaf.leaf_value = value;
  leaf.leaf_id = 0;
  return Tree({leaf}, input_width);
}

std::vector<double> Tree::leaf_values() const {
  std::vector<double> q(static_cast<std::size_t>(leaf_count_), 0.0);
  for (const auto& n : nodes_) {
    if (n.is_leaf()) q[n.leaf_id] = n.leaf_value;
  }
  return q;
}

void GbdtParams::validate() const {
  require(n_trees >= 1, ErrorCode::kConfiguration, "n_trees must be at least 1");
  require(max_depth >= 1, ErrorCode::kConfiguration, "max_depth must be at least 1");
  require(min_samples_leaf >= 1, ErrorCode::kConfiguration, "min_samples_leaf must be at least 1");
  require(learning_rate > 0.0 && learning_rate <= 1.0, ErrorCode::kConfiguration, "learning_rate must be in (0, 1]");
  require(feature_fraction > 0.0 && feature_fraction <= 1.0, ErrorCode::kConfiguration,
          "feature_fraction must be in (0, 1]");
  require(lambda >= 0.0, ErrorCode::kConfiguration, "lambda must be non-negative");
}

void RfParams::validate() const {
  require(n_trees >= 1, ErrorCode::kConfiguration, "n_trees must be at least 1");
  require(max_depth >= 1, ErrorCode::kConfiguration, "max_depth must be at least 1");
  require(min_samples_leaf >= 1, ErrorCode::kConfiguration, "min_samples_leaf must be at least 1");
  require(max_features >= 0, ErrorCode::kConfiguration, "max_features must be non-negative");
}

namespace {

/// Row ids of every feature column sorted by value (ties by row id).
std::vector<std::vector<int>> presort(const Matrix& x) {
  std::vector<std::vector<int>> order(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& o = order[f];
    o.resize(static_cast<std::size_t>(x.rows()));
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
  }
  return order;
}

struct GrowOptions {
  int max_depth = 1;
  int min_samples_leaf = 1;
  double lambda = 1.0;
  double min_gain = 0.0;
  std::vector<int> features;    // candidate features; all when empty
  int features_per_split = 0;  // > 0 samples this many candidates per node
  Rng* rng = nullptr;
};

// Exact greedy growth over presorted sample lists. Each feature keeps its own
// ordering of the same multiset of samples; a node owns the segment
// [begin, end) in every list, and splitting stably partitions each list.
class TreeGrower {
 public:
  TreeGrower(const Matrix& x, std::vector<std::vector<int>> sorted, std::span<const double> grad,
             std::span<const double> hess, const GrowOptions& opts)
      : x_(x), work_(std::move(sorted)), grad_(grad), hess_(hess), opts_(opts) {
    if (opts_.features.empty()) {
      opts_.features.resize(static_cast<std::size_t>(x.cols()));
      std::iota(opts_.features.begin(), opts_.features.end(), 0);
    }
    samples_ = work_.empty() ? 0 : static_cast<int>(work_[0].size());
    scratch_.resize(static_cast<std::size_t>(samples_));
    goes_left_.assign(static_cast<std::size_t>(x.rows()), 0);
  }

  Tree grow(std::vector<int>* leaf_of_row = nullptr) {
    leaf_of_row_ = leaf_of_row;
    if (leaf_of_row_) leaf_of_row_->assign(static_cast<std::size_t>(x_.rows()), -1);
    nodes_.clear();
    next_leaf_ = 0;
    build(0, samples_, 0);
    return Tree(std::move(nodes_), static_cast<int>(x_.cols()));
  }

  SplitCandidate best_split(int begin, int end, std::span<const int> features) const {
    double g = 0.0, h = 0.0;
    segment_sums(begin, end, g, h);
    SplitCandidate best;
    const int count = end - begin;
    for (int f : features) {
      const auto& order = work_[f];
      double gl = 0.0, hl = 0.0;
      for (int i = begin; i + 1 < end; ++i) {
        const int row = order[i];
        gl += grad_[row];
        hl += hess_[row];
        const int left_count = i - begin + 1;
        const double v = x_(row, f);
        const double next = x_(order[i + 1], f);
        if (!(v < next)) continue;
        if (left_count < opts_.min_samples_leaf || count - left_count < opts_.min_samples_leaf) continue;
        const double gain = split_gain(gl, hl, g - gl, h - hl, opts_.lambda);
        if (gain > best.gain && gain > opts_.min_gain) {
          double t = (v + next) / 2.0;
          if (!(t < next)) t = v;
          best = {f, t, gain};
        }
      }
    }
    return best;
  }

  const std::vector<int>& all_features() const { return opts_.features; }

 private:
  void segment_sums(int begin, int end, double& g, double& h) const {
    g = 0.0;
    h = 0.0;
    if (work_.empty()) return;
    for (int i = begin; i < end; ++i) {
      const int row = work_[0][i];
      g += grad_[row];
      h += hess_[row];
    }
  }

  std::vector<int> node_features() {
    if (opts_.features_per_split <= 0 || opts_.features_per_split >= static_cast<int>(opts_.features.size())) {
      return opts_.features;
    }
    std::vector<int> pool = opts_.features;
    opts_.rng->shuffle(std::span<int>(pool));
    pool.resize(static_cast<std::size_t>(opts_.features_per_split));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  int make_leaf(int begin, int end) {
    double g = 0.0, h = 0.0;
    segment_sums(begin, end, g, h);
    TreeNode leaf;
    leaf.leaf_id = next_leaf_++;
    const double denom = h + opts_.lambda;
    leaf.leaf_value = denom > 0.0 ? -g / denom : 0.0;
    if (leaf_of_row_ && !work_.empty()) {
      for (int i = begin; i < end; ++i) (*leaf_of_row_)[work_[0][i]] = leaf.leaf_id;
    }
    nodes_.push_back(leaf);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int build(int begin, int end, int depth) {
    if (depth >= opts_.max_depth || end - begin < 2 * opts_.min_samples_leaf || work_.empty()) {
      return make_leaf(begin, end);
    }
    const auto features = node_features();
    const SplitCandidate split = best_split(begin, end, features);
    if (split.feature < 0) return make_leaf(begin, end);

    const int mid = partition(begin, end, split);
    const int self = static_cast<int>(nodes_.size());
    TreeNode node;
    node.feature = split.feature;
    node.threshold = split.threshold;
    nodes_.push_back(node);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  int partition(int begin, int end, const SplitCandidate& split) {
    for (int i = begin; i < end; ++i) {
      const int row = work_[0][i];
      goes_left_[row] = x_(row, split.feature) <= split.threshold ? 1 : 0;
    }
    int mid = begin;
    for (auto& order : work_) {
      int l = begin, r = 0;
      for (int i = begin; i < end; ++i) {
        const int row = order[i];
        if (goes_left_[row]) {
          order[l++] = row;
        } else {
          scratch_[r++] = row;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + r, order.begin() + l);
      mid = l;
    }
    return mid;
  }

  const Matrix& x_;
  std::vector<std::vector<int>> work_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  GrowOptions opts_;
  int samples_ = 0;
  std::vector<int> scratch_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<TreeNode> nodes_;
  std::vector<int>* leaf_of_row_ = nullptr;
  int next_leaf_ = 0;
};

void check_fit_inputs(const Matrix& x, std::size_t n_grad, std::size_t n_hess) {
  if (static_cast<std::size_t>(x.rows()) != n_grad || n_grad != n_hess) {
    fail(ErrorCode::kShape, "feature rows, gradients and hessians must have equal length");
  }
  if (!x.allFinite()) fail(ErrorCode::kNumeric, "tree inputs must be finite");
}

double mean_logistic_loss(std::span<const double> margins, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const double z = margins[i];
    // log(1 + exp(z)) - y z, evaluated stably
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += softplus - labels[i] * z;
  }
  return total / static_cast<double>(margins.size());
}

}  // namespace

Tree fit_tree(const Matrix& x, std::span<const double> gradients, std::span<const double> hessians,
              const GbdtParams& params) {
  check_fit_inputs(x, gradients.size(), hessians.size());
  require(params.max_depth >= 1, ErrorCode::kConfiguration, "max_depth must be at least 1");
  require(params.min_samples_leaf >= 1, ErrorCode::kConfiguration, "min_samples_leaf must be at least 1");
  GrowOptions opts;
  opts.max_depth = params.max_depth;
  opts.min_samples_leaf = params.min_samples_leaf;
  opts.lambda = params.lambda;
  TreeGrower grower(x, presort(x), gradients, hessians, opts);
  return grower.grow();
}

SplitCandidate best_root_split(const Matrix& x, std::span<const double> gradients,
                               std::span<const double> hessians, int min_samples_leaf, double lambda) {
  check_fit_inputs(x, gradients.size(), hessians.size());
  GrowOptions opts;
  opts.min_samples_leaf = min_samples_leaf;
  opts.lambda = lambda;
  TreeGrower grower(x, presort(x), gradients, hessians, opts);
  return grower.best_split(0, static_cast<int>(x.rows()), grower.all_features());
}

GbdtModel fit_gbdt(const Matrix& x, std::span<const int> labels, const GbdtParams& params, GbdtTrace* trace) {
  params.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  require(labels.size() == n && n > 0, ErrorCode::kShape, "labels must match feature rows");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  require(positives > 0 && static_cast<std::size_t>(positives) < n, ErrorCode::kConfiguration,
          "GBDT training needs both classes");
  if (!x.allFinite()) fail(ErrorCode::kNumeric, "GBDT inputs must be finite");

  GbdtModel model;
  model.learning_rate = params.learning_rate;
  model.input_width = static_cast<int>(x.cols());
  const double rate = static_cast<double>(positives) / static_cast<double>(n);
  model.base_score = logit(rate);

  const auto sorted = presort(x);
  std::vector<double> margins(n, model.base_score), grad(n), hess(n);
  if (trace) trace->training_loss = {mean_logistic_loss(margins, labels)};

  const int d = static_cast<int>(x.cols());
  const int n_features = std::max(1, static_cast<int>(std::ceil(params.feature_fraction * d)));
  std::vector<int> leaf_of_row;
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margins[i]);
      grad[i] = p - labels[i];
      hess[i] = p * (1.0 - p);
    }
    GrowOptions opts;
    opts.max_depth = params.max_depth;
    opts.min_samples_leaf = params.min_samples_leaf;
    opts.lambda = params.lambda;
    if (n_features < d) {
      std::vector<int> pool(static_cast<std::size_t>(d));
      std::iota(pool.begin(), pool.end(), 0);
      Rng rng(derive_seed(params.seed, "gbdt/features", static_cast<std::uint64_t>(t)));
      rng.shuffle(std::span<int>(pool));
      pool.resize(static_cast<std::size_t>(n_features));
      std::sort(pool.begin(), pool.end());
      opts.features = std::move(pool);
    }
    TreeGrower grower(x, sorted, grad, hess, opts);
    Tree tree = grower.grow(&leaf_of_row);
    const auto q = tree.leaf_values();
    for (std::size_t i = 0; i < n; ++i) margins[i] += params.learning_rate * q[leaf_of_row[i]];
    model.trees.push_back(std::move(tree));
    if (trace) trace->training_loss.push_back(mean_logistic_loss(margins, labels));
  }
  return model;
}

Vector predict_margin(const GbdtModel& model, const Matrix& x) {
  if (x.cols() != model.input_width) fail(ErrorCode::kShape, "GBDT input width mismatch");
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict_margin(model, x.row(i));
  return out;
}

IndexMatrix leaf_indices(const GbdtModel& model, const Matrix& x) {
  if (x.cols() != model.input_width) fail(ErrorCode::kShape, "GBDT input width mismatch");
  IndexMatrix out(x.rows(), static_cast<Eigen::Index>(model.trees.size()));
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, static_cast<Eigen::Index>(t)) = model.trees[t].leaf_index(x.row(i));
  }
  return out;
}

std::vector<int> used_feature_indices(std::span<const Tree> trees) {
  std::set<int> used;
  for (const auto& t : trees) used.insert(t.used_features().begin(), t.used_features().end());
  return {used.begin(), used.end()};
}

RfModel fit_random_forest(const Matrix& x, std::span<const int> labels, const RfParams& params) {
  params.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  require(labels.size() == n && n > 0, ErrorCode::kShape, "labels must match feature rows");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  require(positives > 0 && static_cast<std::size_t>(positives) < n, ErrorCode::kConfiguration,
          "random forest training needs both classes");
  if (!x.allFinite()) fail(ErrorCode::kNumeric, "forest inputs must be finite");

  const int d = static_cast<int>(x.cols());
  const int per_split =
      params.max_features > 0 ? std::min(params.max_features, d) : std::max(1, static_cast<int>(std::sqrt(d)));

  // Leaf value -sum(g)/sum(h) with g = -y, h = 1 is the positive proportion;
  // the second-order gain with lambda = 0 is the variance (Gini) reduction.
  std::vector<double> grad(n), hess(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) grad[i] = -static_cast<double>(labels[i]);

  const auto sorted = presort(x);
  RfModel model;
  model.input_width = d;
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(params.seed, "rf/tree", static_cast<std::uint64_t>(t)));
    std::vector<int> count(n, 1);
    if (params.bootstrap) {
      std::fill(count.begin(), count.end(), 0);
      for (std::size_t i = 0; i < n; ++i) count[rng.below(n)] += 1;
    }
    std::vector<std::vector<int>> sample_sorted(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      auto& out = sample_sorted[f];
      out.reserve(n);
      for (int row : sorted[f]) out.insert(out.end(), static_cast<std::size_t>(count[row]), row);
    }
    GrowOptions opts;
    opts.max_depth = params.max_depth;
    opts.min_samples_leaf = params.min_samples_leaf;
    opts.lambda = 0.0;
    opts.min_gain = 1e-9;
    opts.features_per_split = per_split;
    opts.rng = &rng;
    TreeGrower grower(x, std::move(sample_sorted), grad, hess, opts);
    model.trees.push_back(grower.grow());
  }
  return model;
}

Vector predict_proba(const RfModel& model, const Matrix& x) {
  if (x.cols() != model.input_width) fail(ErrorCode::kShape, "forest input width mismatch");
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict_proba(model, x.row(i));
  return out;
}

}  // namespace fairkd

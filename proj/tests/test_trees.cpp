#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fairkd/rng.hpp"
#include "fairkd/trees.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fairkd;

namespace {

struct Toy {
  Matrix x;
  std::vector<int> y;
};

Toy toy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Toy t{Matrix(static_cast<Eigen::Index>(n), 3), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int j = 0; j < 3; ++j) t.x(r, j) = rng.normal();
    t.y[i] = rng.bernoulli(sigmoid(2.0 * t.x(r, 0) - t.x(r, 1))) ? 1 : 0;
  }
  return t;
}

}  // namespace

TEST_CASE("a hand-sized split") {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const std::vector<double> g{-1, -1, 1, 1}, h{1, 1, 1, 1};
  const auto s = best_root_split(x, g, h, 1, 0.0);
  CHECK(s.feature == 0);
  CHECK(s.threshold == 2.5);
  CHECK(s.gain == 4.0);

  GbdtParams p;
  p.max_depth = 1;
  p.min_samples_leaf = 1;
  p.lambda = 0.0;
  const Tree t = fit_tree(x, g, h, p);
  CHECK(t.leaf_count() == 2);
  CHECK(t.leaf_values() == std::vector<double>{1.0, -1.0});
  CHECK(t.predict(x.row(0)) == 1.0);
  CHECK(t.leaf_index(x.row(3)) == 1);
}

TEST_CASE("min_samples_leaf and lambda shape the split") {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const std::vector<double> g{-1, 1, 1, 1}, h{1, 1, 1, 1};
  CHECK(best_root_split(x, g, h, 1, 0.0).threshold == 1.5);
  CHECK(best_root_split(x, g, h, 2, 0.0).threshold == 2.5);
  CHECK(best_root_split(x, g, h, 3, 0.0).feature == -1);
  // A constant gradient has nothing to gain.
  CHECK(best_root_split(x, std::vector<double>{1, 1, 1, 1}, h, 1, 1.0).feature == -1);
}

TEST_CASE("depth-1 search matches the exhaustive oracle") {
  Rng rng(derive_seed(3, "tree-oracle"));
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(40));
    Matrix x(n, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = static_cast<double>(rng.below(6));
    std::vector<double> g(n), h(n);
    for (int i = 0; i < n; ++i) {
      g[i] = (static_cast<double>(rng.below(17)) - 8.0) / 4.0;
      h[i] = static_cast<double>(1 + rng.below(4)) / 4.0;
    }
    const int min_leaf = 1 + static_cast<int>(rng.below(3));
    const auto expected = oracle::exhaustive_split(x, g, h, min_leaf, 1.0);
    const auto found = best_root_split(x, g, h, min_leaf, 1.0);
    CHECK(found.feature == expected.feature);
    CHECK(found.threshold == expected.threshold);
    CHECK(found.gain == expected.gain);
  }
}

TEST_CASE("deeper trees respect depth and leaf size") {
  const Toy t = toy(400, 1);
  std::vector<double> g(t.y.size()), h(t.y.size(), 0.25);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.5 - t.y[i];
  GbdtParams p;
  p.max_depth = 3;
  p.min_samples_leaf = 30;
  const Tree tree = fit_tree(t.x, g, h, p);
  CHECK(tree.leaf_count() <= 8);
  std::vector<int> per_leaf(static_cast<std::size_t>(tree.leaf_count()), 0);
  for (Eigen::Index i = 0; i < t.x.rows(); ++i) ++per_leaf[tree.leaf_index(t.x.row(i))];
  for (int c : per_leaf) CHECK(c >= 30);
}

TEST_CASE("boosting never raises the training loss") {
  const Toy t = toy(300, 2);
  GbdtParams p;
  p.n_trees = 40;
  p.max_depth = 3;
  p.min_samples_leaf = 5;
  GbdtTrace trace;
  const GbdtModel m = fit_gbdt(t.x, t.y, p, &trace);
  REQUIRE(trace.training_loss.size() == 41);
  for (std::size_t i = 1; i < trace.training_loss.size(); ++i) {
    CHECK(trace.training_loss[i] <= trace.training_loss[i - 1]);
  }
  const double mean_y = std::accumulate(t.y.begin(), t.y.end(), 0.0) / static_cast<double>(t.y.size());
  CHECK(m.base_score == doctest::Approx(std::log(mean_y / (1 - mean_y))).epsilon(1e-12));
  CHECK(m.trees.size() == 40);
}

TEST_CASE("GBDT margins add up tree by tree") {
  const Toy t = toy(200, 3);
  GbdtParams p;
  p.n_trees = 5;
  p.max_depth = 2;
  const GbdtModel m = fit_gbdt(t.x, t.y, p);
  const Vector margin = predict_margin(m, t.x);
  const IndexMatrix leaves = leaf_indices(m, t.x);
  for (Eigen::Index i = 0; i < t.x.rows(); ++i) {
    double sum = m.base_score;
    for (std::size_t k = 0; k < m.trees.size(); ++k) {
      sum += m.learning_rate * m.trees[k].leaf_values()[leaves(i, static_cast<Eigen::Index>(k))];
    }
    CHECK(margin(i) == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("fits are deterministic in the seed") {
  const Toy t = toy(200, 4);
  GbdtParams p;
  p.n_trees = 10;
  p.feature_fraction = 0.5;
  p.seed = 9;
  CHECK((predict_margin(fit_gbdt(t.x, t.y, p), t.x) - predict_margin(fit_gbdt(t.x, t.y, p), t.x)).norm() == 0.0);
  RfParams rp;
  rp.n_trees = 10;
  rp.seed = 9;
  const Vector a = predict_proba(fit_random_forest(t.x, t.y, rp), t.x);
  CHECK((a - predict_proba(fit_random_forest(t.x, t.y, rp), t.x)).norm() == 0.0);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() <= 1.0);
}

TEST_CASE("used feature indices") {
  Matrix x(6, 3);
  x << 0, 5, 1, 1, 5, 2, 2, 5, 3, 3, 5, 4, 4, 5, 5, 5, 5, 6;
  const std::vector<double> g{-1, -1, -1, 1, 1, 1}, h(6, 1.0);
  GbdtParams p;
  p.max_depth = 1;
  p.min_samples_leaf = 1;
  const Tree tree = fit_tree(x, g, h, p);
  CHECK(tree.used_features() == std::vector<int>{0});
  const std::vector<Tree> trees{tree, Tree::constant(0.0, 3)};
  CHECK(used_feature_indices(trees) == std::vector<int>{0});
}

TEST_CASE("invalid parameters and shapes") {
  GbdtParams p;
  p.max_depth = 0;
  CHECK_ERROR_CODE(p.validate(), ErrorCode::kConfiguration);
  p = {};
  p.learning_rate = 0.0;
  CHECK_ERROR_CODE(p.validate(), ErrorCode::kConfiguration);
  const Toy t = toy(50, 5);
  GbdtParams ok;
  ok.n_trees = 2;
  const GbdtModel m = fit_gbdt(t.x, t.y, ok);
  CHECK_ERROR_CODE(predict_margin(m, Matrix::Zero(2, 2)), ErrorCode::kShape);
  CHECK_ERROR_CODE(Tree({}, 1), ErrorCode::kConfiguration);
}

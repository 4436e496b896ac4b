#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fairkd/distill.hpp"
#include "fairkd/pipeline.hpp"
#include "test_util.hpp"

using namespace fairkd;

namespace {

Cohort small_cohort(std::size_t n = 1200) {
  SynthConfig c;
  c.n_rows = n;
  c.n_numeric = 5;
  c.n_categorical = 2;
  c.proxy_features = 2;
  c.seed = 4;
  c.attributes = {{"race", {{"A", 0.6, 0.6, 0.8}, {"B", 0.4, -0.6, -0.8}}}};
  return synth_generate(c);
}

GbdtParams small_gbdt() {
  GbdtParams p;
  p.n_trees = 12;
  p.max_depth = 3;
  p.min_samples_leaf = 10;
  return p;
}

double majority_gap(const Vector& scores, const std::vector<int>& groups, int majority) {
  double all = scores.mean(), maj = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (groups[i] != majority) continue;
    maj += scores(i);
    ++n;
  }
  return std::abs(all - maj / n);
}

}  // namespace

TEST_CASE("tree groups are contiguous and cover the ensemble") {
  const Cohort c = small_cohort();
  const FeatureViews v = Preprocessor::fit(c).transform(c);
  GbdtParams p = small_gbdt();
  p.n_trees = 10;
  const GbdtModel m = fit_gbdt(v.dense, c.labels, p);
  const auto groups = group_trees(m, 3);
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].members == std::vector<int>{0, 1, 2, 3});
  CHECK(groups[1].members == std::vector<int>{4, 5, 6});
  CHECK(groups[2].members == std::vector<int>{7, 8, 9});
  CHECK_ERROR_CODE(group_trees(m, 11), ErrorCode::kConfiguration);

  Vector total = Vector::Constant(v.dense.rows(), m.base_score);
  for (const auto& g : groups) {
    int width = 0;
    for (std::size_t k = 0; k < g.members.size(); ++k) {
      CHECK(g.leaf_offsets[k] == width);
      width += m.trees[g.members[k]].leaf_count();
    }
    CHECK(g.leaf_dim == width);
    CHECK(static_cast<int>(g.leaf_values.size()) == width);
    const IndexMatrix codes = group_leaf_codes(m, g, v.dense);
    CHECK(codes.minCoeff() >= 0);
    CHECK(codes.maxCoeff() < width);
    total += group_margins(m, g, codes);
  }
  CHECK((total - predict_margin(m, v.dense)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("raw leaf embeddings reproduce group margins exactly") {
  const Cohort c = small_cohort();
  const FeatureViews v = Preprocessor::fit(c).transform(c);
  const GbdtModel m = fit_gbdt(v.dense, c.labels, small_gbdt());
  const auto groups = group_trees(m, 2);
  for (const auto& g : groups) {
    const IndexMatrix codes = group_leaf_codes(m, g, v.dense);
    const LeafEmbedding e = LeafEmbedding::raw(g, m.learning_rate);
    CHECK((e.output(e.embed(codes)) - group_margins(m, g, codes)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fitted leaf embeddings learn the margins") {
  const Cohort c = small_cohort();
  const FeatureViews v = Preprocessor::fit(c).transform(c);
  const GbdtModel m = fit_gbdt(v.dense, c.labels, small_gbdt());
  const auto g = group_trees(m, 1).front();
  const IndexMatrix codes = group_leaf_codes(m, g, v.dense);
  const Vector margins = group_margins(m, g, codes);
  std::vector<double> loss;
  const LeafEmbedding e = fit_leaf_embedding(g, codes, margins, 4, {30, 0.01, 128, 1}, &loss);
  REQUIRE(loss.size() == 30);
  CHECK(loss.back() < 0.1 * loss.front());
  CHECK(e.dim() == 4);
  CHECK(e.leaf_dim() == g.leaf_dim);
  CHECK_ERROR_CODE(fit_leaf_embedding(g, codes, margins, g.leaf_dim, {1, 0.01, 128, 1}), ErrorCode::kConfiguration);
}

TEST_CASE("distillation without fairness lowers the error") {
  const Cohort c = small_cohort();
  TrainConfig config;
  config.n_groups = 3;
  config.d_leaf = 6;
  config.hidden = {16};
  config.distill_epochs = 15;
  config.distill_lr = 0.005;
  const FairStage stage = prepare_fair_stage(c, config, small_gbdt(), 1);
  std::vector<DistillEpochLog> log;
  const DistilledNet net = run_step_one(stage, config, 1, &log);
  REQUIRE(log.size() == 15);
  CHECK(log.back().mse < 0.5 * log.front().mse);
  for (const auto& e : log) CHECK(e.fairness == 0.0);
  CHECK(net.groups.size() == 3);
  CHECK(net.input_width() == stage.views.dense.cols());
  CHECK_FALSE(net.teacher_hash.empty());

  // y_KD is the sum of the group columns plus the base score.
  const Matrix parts = net.group_contributions(stage.views.dense);
  const Vector y = net.y_kd(stage.views.dense);
  CHECK((parts.rowwise().sum().array() + net.base_score - y.array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("a large fairness weight narrows the majority gap") {
  const Cohort c = small_cohort();
  TrainConfig config;
  config.n_groups = 2;
  config.d_leaf = 6;
  config.hidden = {16};
  config.distill_epochs = 30;
  config.distill_lr = 0.01;
  config.embedding_epochs = 30;
  config.embedding_lr = 0.01;
  const FairStage stage = prepare_fair_stage(c, config, small_gbdt(), 2);
  const DistilledNet plain = run_step_one(stage, config, 2);
  config.alpha_kg = 50.0;
  std::vector<DistillEpochLog> log;
  const DistilledNet fair = run_step_one(stage, config, 2, &log);
  const auto& ids = stage.groups.ids;
  const double teacher = majority_gap(predict_margin(stage.teacher, stage.views.dense), ids, stage.majority);
  const double before = majority_gap(plain.y_kd(stage.views.dense), ids, stage.majority);
  const double after = majority_gap(fair.y_kd(stage.views.dense), ids, stage.majority);
  INFO("teacher " << teacher << ", student " << before << ", fair student " << after);
  CHECK(before > 0.5 * teacher);
  CHECK(after < 0.5 * before);
  CHECK(log.back().fairness < log.front().fairness);
}

TEST_CASE("output maps stay fixed while the nets train") {
  const Cohort c = small_cohort(600);
  TrainConfig config;
  config.n_groups = 2;
  config.d_leaf = 4;
  config.hidden = {8};
  config.distill_epochs = 2;
  config.alpha_kg = 1.0;
  const FairStage stage = prepare_fair_stage(c, config, small_gbdt(), 3);
  DistilledNet net = run_step_one(stage, config, 3);
  for (std::size_t g = 0; g < net.groups.size(); ++g) {
    CHECK(net.groups[g].embedding.w_out.value == stage.embeddings[g].w_out.value);
    CHECK(net.groups[g].embedding.b_out.value == stage.embeddings[g].b_out.value);
  }
  std::size_t expected = 0;
  for (auto& g : net.groups) expected += g.net.parameters().size();
  CHECK(net.parameters().size() == expected);
}
